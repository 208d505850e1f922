#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

// Core program representation: a program is a set of global integer
// variables, a set of locks, and a list of thread functions, each with a
// control-flow graph over the fourteen basic commands. Surface constructs
// (if/while/for) exist only in the parser; the CFG is closed over Command.

namespace idaracer {

// ---------------------------------------------------------------------------
// Expressions

enum class BinOp { Add, Sub, Mul, Div, Mod, Eq, Ne, Lt, Le, Gt, Ge, And, Or };
enum class UnOp { Neg, Not };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind { Literal, Var, Unary, Binary };

  Kind kind = Kind::Literal;
  long long value = 0;   // Literal
  std::string name;      // Var: source spelling
  int var = -1;          // Var: index into Program::vars
  UnOp uop = UnOp::Neg;
  BinOp bop = BinOp::Add;
  ExprPtr lhs, rhs;      // Unary uses lhs only

  static ExprPtr literal(long long v) {
    auto e = std::make_shared<Expr>();
    e->kind = Kind::Literal;
    e->value = v;
    return e;
  }
  static ExprPtr variable(std::string name, int index) {
    auto e = std::make_shared<Expr>();
    e->kind = Kind::Var;
    e->name = std::move(name);
    e->var = index;
    return e;
  }
  static ExprPtr unary(UnOp op, ExprPtr a) {
    auto e = std::make_shared<Expr>();
    e->kind = Kind::Unary;
    e->uop = op;
    e->lhs = std::move(a);
    return e;
  }
  static ExprPtr binary(BinOp op, ExprPtr a, ExprPtr b) {
    auto e = std::make_shared<Expr>();
    e->kind = Kind::Binary;
    e->bop = op;
    e->lhs = std::move(a);
    e->rhs = std::move(b);
    return e;
  }
};

// Division or modulo by zero during evaluation. Reported as an execution
// diagnostic, never a crash.
struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

long long eval(const Expr& e, const std::vector<long long>& env);
inline bool eval_bool(const Expr& e, const std::vector<long long>& env) {
  return eval(e, env) != 0;
}

inline long long eval(const Expr& e, const std::vector<long long>& env) {
  switch (e.kind) {
    case Expr::Kind::Literal: return e.value;
    case Expr::Kind::Var: return env.at(static_cast<size_t>(e.var));
    case Expr::Kind::Unary: {
      long long v = eval(*e.lhs, env);
      return e.uop == UnOp::Neg ? -v : (v == 0 ? 1 : 0);
    }
    case Expr::Kind::Binary: {
      if (e.bop == BinOp::And) return eval_bool(*e.lhs, env) && eval_bool(*e.rhs, env) ? 1 : 0;
      if (e.bop == BinOp::Or) return eval_bool(*e.lhs, env) || eval_bool(*e.rhs, env) ? 1 : 0;
      long long a = eval(*e.lhs, env);
      long long b = eval(*e.rhs, env);
      switch (e.bop) {
        case BinOp::Add: return a + b;
        case BinOp::Sub: return a - b;
        case BinOp::Mul: return a * b;
        case BinOp::Div:
          if (b == 0) throw EvalError("division by zero");
          return a / b;
        case BinOp::Mod:
          if (b == 0) throw EvalError("modulo by zero");
          return a % b;
        case BinOp::Eq: return a == b;
        case BinOp::Ne: return a != b;
        case BinOp::Lt: return a < b;
        case BinOp::Le: return a <= b;
        case BinOp::Gt: return a > b;
        case BinOp::Ge: return a >= b;
        default: break;
      }
      break;
    }
  }
  throw EvalError("malformed expression");
}

// Collect variable indices read by an expression.
inline void collect_vars(const Expr& e, std::vector<int>& out) {
  switch (e.kind) {
    case Expr::Kind::Literal: break;
    case Expr::Kind::Var: out.push_back(e.var); break;
    case Expr::Kind::Unary: collect_vars(*e.lhs, out); break;
    case Expr::Kind::Binary:
      collect_vars(*e.lhs, out);
      collect_vars(*e.rhs, out);
      break;
  }
}

// ---------------------------------------------------------------------------
// Commands

enum class Op {
  Skip,
  Assign,
  Assume,
  Create,
  SetPriority,
  Suspend,
  Resume,
  SuspendSched,
  ResumeSched,
  DisableInt,
  EnableInt,
  Lock,
  Unlock,
  Block,
  Start,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Skip: return "skip";
    case Op::Assign: return "assign";
    case Op::Assume: return "assume";
    case Op::Create: return "create";
    case Op::SetPriority: return "set_priority";
    case Op::Suspend: return "suspend";
    case Op::Resume: return "resume";
    case Op::SuspendSched: return "suspendsched";
    case Op::ResumeSched: return "resumesched";
    case Op::DisableInt: return "disableint";
    case Op::EnableInt: return "enableint";
    case Op::Lock: return "lock";
    case Op::Unlock: return "unlock";
    case Op::Block: return "block";
    case Op::Start: return "start";
  }
  return "?";
}

struct Command {
  Op op = Op::Skip;
  int var = -1;       // Assign LHS / Create handle variable
  ExprPtr expr;       // Assign RHS / Assume condition
  int func = -1;      // Create: target function
  int priority = 0;   // Create / SetPriority literal
  int target = -1;    // SetPriority/Suspend/Resume handle variable; -1 = NULL
  int lock = -1;      // Lock/Unlock
};

// ---------------------------------------------------------------------------
// CFG

enum class FuncKind { Main, Task, Isr };

inline const char* kind_name(FuncKind k) {
  switch (k) {
    case FuncKind::Main: return "main";
    case FuncKind::Task: return "task";
    case FuncKind::Isr: return "isr";
  }
  return "?";
}

// Role of an instruction inserted by skip instrumentation around a target
// statement. Plain for everything in an uninstrumented program.
enum class StmtRole { Plain, Pre, Post };

struct StmtId {
  int func = -1;
  int line = 0;
  int seq = 0;  // disambiguates several instructions on one line

  friend bool operator==(const StmtId&, const StmtId&) = default;
  friend auto operator<=>(const StmtId&, const StmtId&) = default;
};

struct Instruction {
  int from = -1;
  int to = -1;
  Command cmd;
  StmtId id;
  int index = -1;          // position in Function::instrs
  bool loop_entry = false; // traversing it counts one loop iteration
  int loop_index = -1;     // dense index among the function's loop entries
  bool in_loop = false;    // lies inside some loop body
  StmtRole role = StmtRole::Plain;
};

struct Function {
  std::string name;
  FuncKind kind = FuncKind::Task;
  int index = -1;
  int entry = 0;
  int exit = 0;
  int num_locs = 1;
  int num_loops = 0;
  int isr_priority = -1;  // m + position among ISRs, fixed
  std::vector<Instruction> instrs;
  std::vector<std::vector<int>> outgoing;  // per location, instr indices

  void rebuild_outgoing() {
    outgoing.assign(static_cast<size_t>(num_locs), {});
    for (const auto& in : instrs) outgoing[static_cast<size_t>(in.from)].push_back(in.index);
  }
};

struct LockDecl {
  std::string name;
  bool is_mutex = false;
};

// ---------------------------------------------------------------------------
// Surface AST, kept for pretty-printing

struct SurfaceStmt {
  enum class Kind { Simple, If, While, Forever } kind = Kind::Simple;
  int line = 0;
  // Simple
  Op op = Op::Skip;
  std::string a, b;  // identifier operands (assign LHS, create func/handle, ...)
  ExprPtr expr;      // assign RHS / assume / if / while condition
  int number = 0;    // create / set_priority priority literal
  bool null_target = false;
  // If / While / Forever
  std::vector<SurfaceStmt> body;
  std::vector<SurfaceStmt> else_body;
};

struct SurfaceDecl {
  FuncKind kind = FuncKind::Task;
  std::string name;
  std::vector<SurfaceStmt> body;
};

// ---------------------------------------------------------------------------
// Program

struct Program {
  std::vector<std::string> vars;
  std::vector<LockDecl> locks;
  std::vector<Function> functions;
  int max_task_prio = 7;
  int main_index = -1;
  int num_isrs = 0;
  std::vector<SurfaceDecl> surface;

  const Function& main_fn() const { return functions[static_cast<size_t>(main_index)]; }

  int find_function(const std::string& name) const {
    for (const auto& f : functions)
      if (f.name == name) return f.index;
    return -1;
  }
  int find_var(const std::string& name) const {
    for (size_t i = 0; i < vars.size(); ++i)
      if (vars[i] == name) return static_cast<int>(i);
    return -1;
  }

  std::string stmt_string(const StmtId& id) const {
    std::string s = functions[static_cast<size_t>(id.func)].name + ":" + std::to_string(id.line);
    if (id.seq > 0) s += "#" + std::to_string(id.seq);
    return s;
  }

  // Only plain instructions carry a statement identity of their own;
  // instrumentation skips share their bracketed statement's id.
  const Instruction* find_instr(const StmtId& id) const {
    for (const auto& in : functions[static_cast<size_t>(id.func)].instrs)
      if (in.id == id && in.role == StmtRole::Plain) return &in;
    return nullptr;
  }

  std::optional<std::pair<int, int>> find_instr_index(const StmtId& id) const {
    const auto& instrs = functions[static_cast<size_t>(id.func)].instrs;
    for (size_t i = 0; i < instrs.size(); ++i)
      if (instrs[i].id == id && instrs[i].role == StmtRole::Plain)
        return std::make_pair(id.func, static_cast<int>(i));
    return std::nullopt;
  }

  // Resolves "func:line" or "func:line#seq" to an instruction.
  const Instruction* resolve(const std::string& spec) const {
    auto colon = spec.find(':');
    if (colon == std::string::npos) return nullptr;
    int fi = find_function(spec.substr(0, colon));
    if (fi < 0) return nullptr;
    std::string rest = spec.substr(colon + 1);
    int seq = 0;
    auto hash = rest.find('#');
    if (hash != std::string::npos) {
      seq = std::stoi(rest.substr(hash + 1));
      rest = rest.substr(0, hash);
    }
    int line = 0;
    try {
      line = std::stoi(rest);
    } catch (...) {
      return nullptr;
    }
    StmtId id{fi, line, seq};
    return find_instr(id);
  }
};

// Deterministic statement listing: function declaration order, then
// construction (location) order within each function.
inline std::vector<std::pair<StmtId, const Command*>> statements(const Program& p) {
  std::vector<std::pair<StmtId, const Command*>> out;
  for (const auto& f : p.functions)
    for (const auto& in : f.instrs) out.emplace_back(in.id, &in.cmd);
  return out;
}

}  // namespace idaracer
