#pragma once

#include <cctype>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "idaracer/program.hpp"

// Text -> Program. Single pass tokenizer, recursive descent parser into the
// surface AST, then name resolution and structured lowering into per-function
// CFGs. if/while/for are desugared into assume pairs; for(;;) is an infinite
// loop. Statement ids record the physical source line; several instructions
// arising from one line get consecutive seq numbers.

namespace idaracer {

struct ParseError : std::runtime_error {
  int line;
  int col;
  ParseError(std::string msg, int line, int col)
      : std::runtime_error("line " + std::to_string(line) + ":" + std::to_string(col) + ": " + msg),
        line(line),
        col(col) {}
};

namespace detail {

enum class Tok { End, Ident, Int, Punct };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  long long value = 0;
  int line = 1;
  int col = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) { advance(); }

  const Token& peek() const { return tok_; }

  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    skip_ws();
    tok_.line = line_;
    tok_.col = col_;
    if (pos_ >= src_.size()) {
      tok_.kind = Tok::End;
      tok_.text.clear();
      return;
    }
    char c = src_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        bump();
      tok_.kind = Tok::Ident;
      tok_.text = src_.substr(start, pos_ - start);
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      size_t start = pos_;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) bump();
      tok_.kind = Tok::Int;
      tok_.text = src_.substr(start, pos_ - start);
      tok_.value = std::stoll(tok_.text);
      return;
    }
    // multi-char operators first
    static const char* two[] = {":=", "==", "!=", "<=", ">=", "&&", "||"};
    for (const char* op : two) {
      if (src_.compare(pos_, 2, op) == 0) {
        tok_.kind = Tok::Punct;
        tok_.text = op;
        bump();
        bump();
        return;
      }
    }
    tok_.kind = Tok::Punct;
    tok_.text = std::string(1, c);
    bump();
  }

  void skip_ws() {
    for (;;) {
      while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) bump();
      if (pos_ + 1 < src_.size() && src_[pos_] == '/' && src_[pos_ + 1] == '/') {
        while (pos_ < src_.size() && src_[pos_] != '\n') bump();
        continue;
      }
      break;
    }
  }

  void bump() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  const std::string& src_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  Token tok_;
};

// Raw expression over identifier names; resolved to var indices later.
struct RawExpr {
  ExprPtr expr;                 // with var = -1 placeholders
};

class Parser {
 public:
  explicit Parser(const std::string& src) : lex_(src) {}

  Program run() {
    Program p;
    parse_headers(p);
    while (lex_.peek().kind != Tok::End) parse_decl(p);
    if (p.surface.empty()) fail("empty program");
    build(p);
    return p;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) {
    fail_at(msg, lex_.peek().line, lex_.peek().col);
  }
  [[noreturn]] void fail_at(const std::string& msg, int line, int col) {
    throw ParseError(msg, line, col);
  }

  bool at_ident(const char* kw) {
    return lex_.peek().kind == Tok::Ident && lex_.peek().text == kw;
  }
  bool at_punct(const char* p) {
    return lex_.peek().kind == Tok::Punct && lex_.peek().text == p;
  }
  void expect_punct(const char* p) {
    if (!at_punct(p)) fail(std::string("expected '") + p + "'");
    lex_.take();
  }
  std::string expect_ident() {
    if (lex_.peek().kind != Tok::Ident) fail("expected identifier");
    return lex_.take().text;
  }
  long long expect_int() {
    if (lex_.peek().kind != Tok::Int) fail("expected integer literal");
    return lex_.take().value;
  }

  void parse_headers(Program& p) {
    for (;;) {
      if (at_ident("maxprio")) {
        lex_.take();
        long long m = expect_int();
        if (m < 1) fail("maxprio must be positive");
        p.max_task_prio = static_cast<int>(m);
        expect_punct(";");
      } else if (at_ident("mutex")) {
        lex_.take();
        for (;;) {
          mutexes_.insert(expect_ident());
          if (at_punct(",")) {
            lex_.take();
            continue;
          }
          break;
        }
        expect_punct(";");
      } else {
        break;
      }
    }
  }

  void parse_decl(Program& p) {
    SurfaceDecl d;
    if (at_ident("main")) {
      lex_.take();
      d.kind = FuncKind::Main;
      d.name = "main";
    } else if (at_ident("task")) {
      lex_.take();
      d.kind = FuncKind::Task;
      d.name = expect_ident();
    } else if (at_ident("isr")) {
      lex_.take();
      d.kind = FuncKind::Isr;
      d.name = expect_ident();
    } else {
      fail("expected 'main', 'task' or 'isr'");
    }
    d.body = parse_block();
    p.surface.push_back(std::move(d));
  }

  std::vector<SurfaceStmt> parse_block() {
    expect_punct("{");
    std::vector<SurfaceStmt> stmts;
    while (!at_punct("}")) stmts.push_back(parse_stmt());
    lex_.take();
    return stmts;
  }

  SurfaceStmt parse_stmt() {
    SurfaceStmt s;
    s.line = lex_.peek().line;
    if (at_ident("if")) {
      lex_.take();
      s.kind = SurfaceStmt::Kind::If;
      expect_punct("(");
      s.expr = parse_expr();
      expect_punct(")");
      s.body = parse_block();
      if (at_ident("else")) {
        lex_.take();
        s.else_body = parse_block();
      }
      return s;
    }
    if (at_ident("while")) {
      lex_.take();
      s.kind = SurfaceStmt::Kind::While;
      expect_punct("(");
      s.expr = parse_expr();
      expect_punct(")");
      s.body = parse_block();
      return s;
    }
    if (at_ident("for")) {
      lex_.take();
      s.kind = SurfaceStmt::Kind::Forever;
      expect_punct("(");
      expect_punct(";");
      expect_punct(";");
      expect_punct(")");
      s.body = parse_block();
      return s;
    }
    s.kind = SurfaceStmt::Kind::Simple;
    parse_simple(s);
    expect_punct(";");
    return s;
  }

  void parse_simple(SurfaceStmt& s) {
    if (lex_.peek().kind != Tok::Ident) fail("expected statement");
    const std::string head = lex_.peek().text;
    if (head == "skip") {
      lex_.take();
      s.op = Op::Skip;
    } else if (head == "assume") {
      lex_.take();
      s.op = Op::Assume;
      expect_punct("(");
      s.expr = parse_expr();
      expect_punct(")");
    } else if (head == "create") {
      lex_.take();
      s.op = Op::Create;
      expect_punct("(");
      s.a = expect_ident();  // function
      expect_punct(",");
      s.number = static_cast<int>(expect_int());
      expect_punct(",");
      s.b = expect_ident();  // handle variable
      expect_punct(")");
    } else if (head == "set_priority") {
      lex_.take();
      s.op = Op::SetPriority;
      expect_punct("(");
      if (at_ident("NULL")) {
        lex_.take();
        s.null_target = true;
      } else {
        s.a = expect_ident();
      }
      expect_punct(",");
      s.number = static_cast<int>(expect_int());
      expect_punct(")");
    } else if (head == "suspend") {
      lex_.take();
      s.op = Op::Suspend;
      expect_punct("(");
      if (at_ident("NULL")) {
        lex_.take();
        s.null_target = true;
      } else {
        s.a = expect_ident();
      }
      expect_punct(")");
    } else if (head == "resume") {
      lex_.take();
      s.op = Op::Resume;
      expect_punct("(");
      s.a = expect_ident();
      expect_punct(")");
    } else if (head == "suspendsched") {
      lex_.take();
      s.op = Op::SuspendSched;
    } else if (head == "resumesched") {
      lex_.take();
      s.op = Op::ResumeSched;
    } else if (head == "disableint") {
      lex_.take();
      s.op = Op::DisableInt;
    } else if (head == "enableint") {
      lex_.take();
      s.op = Op::EnableInt;
    } else if (head == "lock") {
      lex_.take();
      s.op = Op::Lock;
      expect_punct("(");
      s.a = expect_ident();
      expect_punct(")");
    } else if (head == "unlock") {
      lex_.take();
      s.op = Op::Unlock;
      expect_punct("(");
      s.a = expect_ident();
      expect_punct(")");
    } else if (head == "block") {
      lex_.take();
      s.op = Op::Block;
    } else if (head == "start") {
      lex_.take();
      s.op = Op::Start;
    } else {
      // assignment: ident := expr
      s.op = Op::Assign;
      s.a = expect_ident();
      expect_punct(":=");
      s.expr = parse_expr();
    }
  }

  // expression grammar, loosest to tightest: || && cmp add mul unary primary
  ExprPtr parse_expr() { return parse_or(); }

  ExprPtr parse_or() {
    ExprPtr e = parse_and();
    while (at_punct("||")) {
      lex_.take();
      e = Expr::binary(BinOp::Or, e, parse_and());
    }
    return e;
  }
  ExprPtr parse_and() {
    ExprPtr e = parse_cmp();
    while (at_punct("&&")) {
      lex_.take();
      e = Expr::binary(BinOp::And, e, parse_cmp());
    }
    return e;
  }
  ExprPtr parse_cmp() {
    ExprPtr e = parse_add();
    for (;;) {
      BinOp op;
      if (at_punct("==")) op = BinOp::Eq;
      else if (at_punct("!=")) op = BinOp::Ne;
      else if (at_punct("<=")) op = BinOp::Le;
      else if (at_punct(">=")) op = BinOp::Ge;
      else if (at_punct("<")) op = BinOp::Lt;
      else if (at_punct(">")) op = BinOp::Gt;
      else return e;
      lex_.take();
      e = Expr::binary(op, e, parse_add());
    }
  }
  ExprPtr parse_add() {
    ExprPtr e = parse_mul();
    for (;;) {
      if (at_punct("+")) {
        lex_.take();
        e = Expr::binary(BinOp::Add, e, parse_mul());
      } else if (at_punct("-")) {
        lex_.take();
        e = Expr::binary(BinOp::Sub, e, parse_mul());
      } else {
        return e;
      }
    }
  }
  ExprPtr parse_mul() {
    ExprPtr e = parse_unary();
    for (;;) {
      BinOp op;
      if (at_punct("*")) op = BinOp::Mul;
      else if (at_punct("/")) op = BinOp::Div;
      else if (at_punct("%")) op = BinOp::Mod;
      else return e;
      lex_.take();
      e = Expr::binary(op, e, parse_unary());
    }
  }
  ExprPtr parse_unary() {
    if (at_punct("!")) {
      lex_.take();
      return Expr::unary(UnOp::Not, parse_unary());
    }
    if (at_punct("-")) {
      lex_.take();
      return Expr::unary(UnOp::Neg, parse_unary());
    }
    return parse_primary();
  }
  ExprPtr parse_primary() {
    if (at_punct("(")) {
      lex_.take();
      ExprPtr e = parse_expr();
      expect_punct(")");
      return e;
    }
    if (lex_.peek().kind == Tok::Int) return Expr::literal(lex_.take().value);
    if (lex_.peek().kind == Tok::Ident) {
      Token t = lex_.take();
      if (t.text == "NULL") fail_at("NULL is only valid as a command argument", t.line, t.col);
      return Expr::variable(t.text, -1);
    }
    fail("expected expression");
  }

  // -------------------------------------------------------------------------
  // Name resolution + lowering

  enum class NameKind { Var, Lock, Func };

  int intern_var(Program& p, const std::string& name, int line) {
    check_kind(name, NameKind::Var, line);
    int i = p.find_var(name);
    if (i >= 0) return i;
    p.vars.push_back(name);
    return static_cast<int>(p.vars.size()) - 1;
  }

  int intern_lock(Program& p, const std::string& name, int line) {
    check_kind(name, NameKind::Lock, line);
    for (size_t i = 0; i < p.locks.size(); ++i)
      if (p.locks[i].name == name) return static_cast<int>(i);
    p.locks.push_back({name, mutexes_.count(name) > 0});
    return static_cast<int>(p.locks.size()) - 1;
  }

  void check_kind(const std::string& name, NameKind k, int line) {
    auto [it, fresh] = name_kinds_.emplace(name, k);
    if (!fresh && it->second != k)
      fail_at("identifier '" + name + "' used as both " + kind_word(it->second) + " and " +
                  kind_word(k),
              line, 0);
  }

  static const char* kind_word(NameKind k) {
    switch (k) {
      case NameKind::Var: return "variable";
      case NameKind::Lock: return "lock";
      case NameKind::Func: return "function";
    }
    return "?";
  }

  ExprPtr resolve_expr(Program& p, const ExprPtr& e, int line) {
    if (!e) return e;
    switch (e->kind) {
      case Expr::Kind::Literal: return e;
      case Expr::Kind::Var: return Expr::variable(e->name, intern_var(p, e->name, line));
      case Expr::Kind::Unary: return Expr::unary(e->uop, resolve_expr(p, e->lhs, line));
      case Expr::Kind::Binary:
        return Expr::binary(e->bop, resolve_expr(p, e->lhs, line), resolve_expr(p, e->rhs, line));
    }
    return e;
  }

  void build(Program& p) {
    // declare functions first so create() can reference later declarations
    int isr_count = 0;
    for (const auto& d : p.surface) {
      if (p.find_function(d.name) >= 0) fail_at("duplicate function name '" + d.name + "'", 1, 1);
      check_kind(d.name, NameKind::Func, 1);
      Function f;
      f.name = d.name;
      f.kind = d.kind;
      f.index = static_cast<int>(p.functions.size());
      if (d.kind == FuncKind::Main) {
        if (p.main_index >= 0) fail_at("duplicate main function", 1, 1);
        p.main_index = f.index;
      }
      if (d.kind == FuncKind::Isr) f.isr_priority = p.max_task_prio + (++isr_count);
      p.functions.push_back(std::move(f));
    }
    if (p.main_index < 0) fail_at("program has no main function", 1, 1);
    p.num_isrs = isr_count;

    for (size_t i = 0; i < p.surface.size(); ++i) lower_function(p, p.functions[i], p.surface[i]);
  }

  void lower_function(Program& p, Function& f, const SurfaceDecl& d) {
    cur_fn_ = &f;
    cur_prog_ = &p;
    line_seq_.clear();
    f.num_locs = 1;  // entry = 0
    f.entry = 0;
    if (d.body.empty()) {
      f.exit = f.entry;
    } else {
      f.exit = new_loc();
      lower_block(d.body, f.entry, f.exit, 0);
    }
    f.rebuild_outgoing();
    cur_fn_ = nullptr;
    cur_prog_ = nullptr;
  }

  int new_loc() { return cur_fn_->num_locs++; }

  void add_instr(int from, int to, Command cmd, int line, int depth, bool loop_entry = false) {
    Instruction in;
    in.from = from;
    in.to = to;
    in.cmd = std::move(cmd);
    in.id = {cur_fn_->index, line, line_seq_[line]++};
    in.index = static_cast<int>(cur_fn_->instrs.size());
    in.loop_entry = loop_entry;
    if (loop_entry) in.loop_index = cur_fn_->num_loops++;
    in.in_loop = depth > 0;
    cur_fn_->instrs.push_back(std::move(in));
  }

  void lower_block(const std::vector<SurfaceStmt>& stmts, int from, int to, int depth) {
    for (size_t i = 0; i < stmts.size(); ++i) {
      int next = (i + 1 == stmts.size()) ? to : new_loc();
      lower_stmt(stmts[i], from, next, depth);
      from = next;
    }
  }

  void lower_stmt(const SurfaceStmt& s, int from, int to, int depth) {
    Program& p = *cur_prog_;
    switch (s.kind) {
      case SurfaceStmt::Kind::Simple: {
        add_instr(from, to, make_command(p, s), s.line, depth);
        return;
      }
      case SurfaceStmt::Kind::If: {
        ExprPtr b = resolve_expr(p, s.expr, s.line);
        Command ct;
        ct.op = Op::Assume;
        ct.expr = b;
        Command ce;
        ce.op = Op::Assume;
        ce.expr = Expr::unary(UnOp::Not, b);
        int then_in = s.body.empty() ? to : new_loc();
        add_instr(from, then_in, std::move(ct), s.line, depth);
        if (!s.body.empty()) lower_block(s.body, then_in, to, depth);
        int else_in = s.else_body.empty() ? to : new_loc();
        add_instr(from, else_in, std::move(ce), s.line, depth);
        if (!s.else_body.empty()) lower_block(s.else_body, else_in, to, depth);
        return;
      }
      case SurfaceStmt::Kind::While:
      case SurfaceStmt::Kind::Forever: {
        ExprPtr b = s.kind == SurfaceStmt::Kind::Forever ? Expr::literal(1)
                                                         : resolve_expr(p, s.expr, s.line);
        Command ct;
        ct.op = Op::Assume;
        ct.expr = b;
        Command ce;
        ce.op = Op::Assume;
        ce.expr = Expr::unary(UnOp::Not, b);
        // from doubles as the loop head; the body's last instruction is the
        // back edge into it
        int body_in = s.body.empty() ? from : new_loc();
        add_instr(from, body_in, std::move(ct), s.line, depth, /*loop_entry=*/true);
        add_instr(from, to, std::move(ce), s.line, depth);
        if (!s.body.empty()) lower_block(s.body, body_in, from, depth + 1);
        return;
      }
    }
  }

  Command make_command(Program& p, const SurfaceStmt& s) {
    Command c;
    c.op = s.op;
    switch (s.op) {
      case Op::Skip:
      case Op::SuspendSched:
      case Op::ResumeSched:
      case Op::DisableInt:
      case Op::EnableInt:
      case Op::Block:
      case Op::Start:
        break;
      case Op::Assign:
        c.var = intern_var(p, s.a, s.line);
        c.expr = resolve_expr(p, s.expr, s.line);
        break;
      case Op::Assume:
        c.expr = resolve_expr(p, s.expr, s.line);
        break;
      case Op::Create:
        c.func = p.find_function(s.a);
        if (c.func < 0) fail_at("unknown function '" + s.a + "' in create", s.line, 0);
        c.priority = s.number;
        c.var = intern_var(p, s.b, s.line);
        break;
      case Op::SetPriority:
        c.target = s.null_target ? -1 : intern_var(p, s.a, s.line);
        c.priority = s.number;
        break;
      case Op::Suspend:
        c.target = s.null_target ? -1 : intern_var(p, s.a, s.line);
        break;
      case Op::Resume:
        c.target = intern_var(p, s.a, s.line);
        break;
      case Op::Lock:
      case Op::Unlock:
        c.lock = intern_lock(p, s.a, s.line);
        break;
    }
    return c;
  }

  Lexer lex_;
  std::set<std::string> mutexes_;
  std::map<std::string, NameKind> name_kinds_;
  std::map<int, int> line_seq_;
  Function* cur_fn_ = nullptr;
  Program* cur_prog_ = nullptr;
};

}  // namespace detail

inline Program parse_program(const std::string& source) {
  return detail::Parser(source).run();
}

}  // namespace idaracer
