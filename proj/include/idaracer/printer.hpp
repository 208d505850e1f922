#pragma once

#include <sstream>
#include <string>

#include "idaracer/program.hpp"

// Canonical source rendering from the surface AST, plus a structural program
// comparison that ignores physical line numbers. Printing then reparsing
// yields a structurally identical program; line numbers differ because the
// canonical layout need not match the original.

namespace idaracer {

namespace detail {

inline int precedence(BinOp op) {
  switch (op) {
    case BinOp::Or: return 1;
    case BinOp::And: return 2;
    case BinOp::Eq:
    case BinOp::Ne:
    case BinOp::Lt:
    case BinOp::Le:
    case BinOp::Gt:
    case BinOp::Ge: return 3;
    case BinOp::Add:
    case BinOp::Sub: return 4;
    case BinOp::Mul:
    case BinOp::Div:
    case BinOp::Mod: return 5;
  }
  return 0;
}

inline const char* binop_text(BinOp op) {
  switch (op) {
    case BinOp::Add: return "+";
    case BinOp::Sub: return "-";
    case BinOp::Mul: return "*";
    case BinOp::Div: return "/";
    case BinOp::Mod: return "%";
    case BinOp::Eq: return "==";
    case BinOp::Ne: return "!=";
    case BinOp::Lt: return "<";
    case BinOp::Le: return "<=";
    case BinOp::Gt: return ">";
    case BinOp::Ge: return ">=";
    case BinOp::And: return "&&";
    case BinOp::Or: return "||";
  }
  return "?";
}

inline void print_expr(std::ostream& os, const Expr& e, int parent_prec) {
  switch (e.kind) {
    case Expr::Kind::Literal:
      os << e.value;
      return;
    case Expr::Kind::Var:
      os << e.name;
      return;
    case Expr::Kind::Unary:
      os << (e.uop == UnOp::Neg ? "-" : "!");
      os << "(";
      print_expr(os, *e.lhs, 0);
      os << ")";
      return;
    case Expr::Kind::Binary: {
      int prec = precedence(e.bop);
      if (prec < parent_prec) os << "(";
      print_expr(os, *e.lhs, prec);
      os << " " << binop_text(e.bop) << " ";
      print_expr(os, *e.rhs, prec + 1);
      if (prec < parent_prec) os << ")";
      return;
    }
  }
}

inline void print_stmt(std::ostream& os, const SurfaceStmt& s, int indent);

inline void print_block(std::ostream& os, const std::vector<SurfaceStmt>& body, int indent) {
  for (const auto& st : body) print_stmt(os, st, indent);
}

inline void print_stmt(std::ostream& os, const SurfaceStmt& s, int indent) {
  std::string pad(static_cast<size_t>(indent) * 2, ' ');
  switch (s.kind) {
    case SurfaceStmt::Kind::If:
      os << pad << "if (";
      print_expr(os, *s.expr, 0);
      os << ") {\n";
      print_block(os, s.body, indent + 1);
      os << pad << "}";
      if (!s.else_body.empty()) {
        os << " else {\n";
        print_block(os, s.else_body, indent + 1);
        os << pad << "}";
      }
      os << "\n";
      return;
    case SurfaceStmt::Kind::While:
      os << pad << "while (";
      print_expr(os, *s.expr, 0);
      os << ") {\n";
      print_block(os, s.body, indent + 1);
      os << pad << "}\n";
      return;
    case SurfaceStmt::Kind::Forever:
      os << pad << "for (;;) {\n";
      print_block(os, s.body, indent + 1);
      os << pad << "}\n";
      return;
    case SurfaceStmt::Kind::Simple:
      break;
  }
  os << pad;
  switch (s.op) {
    case Op::Skip: os << "skip"; break;
    case Op::Assign:
      os << s.a << " := ";
      print_expr(os, *s.expr, 0);
      break;
    case Op::Assume:
      os << "assume(";
      print_expr(os, *s.expr, 0);
      os << ")";
      break;
    case Op::Create:
      os << "create(" << s.a << ", " << s.number << ", " << s.b << ")";
      break;
    case Op::SetPriority:
      os << "set_priority(" << (s.null_target ? "NULL" : s.a) << ", " << s.number << ")";
      break;
    case Op::Suspend:
      os << "suspend(" << (s.null_target ? "NULL" : s.a) << ")";
      break;
    case Op::Resume:
      os << "resume(" << s.a << ")";
      break;
    case Op::SuspendSched: os << "suspendsched"; break;
    case Op::ResumeSched: os << "resumesched"; break;
    case Op::DisableInt: os << "disableint"; break;
    case Op::EnableInt: os << "enableint"; break;
    case Op::Lock: os << "lock(" << s.a << ")"; break;
    case Op::Unlock: os << "unlock(" << s.a << ")"; break;
    case Op::Block: os << "block"; break;
    case Op::Start: os << "start"; break;
  }
  os << ";\n";
}

}  // namespace detail

inline std::string pretty_print(const Program& p) {
  std::ostringstream os;
  if (p.max_task_prio != 7) os << "maxprio " << p.max_task_prio << ";\n";
  bool any_mutex = false;
  for (const auto& l : p.locks)
    if (l.is_mutex) {
      os << (any_mutex ? ", " : "mutex ") << l.name;
      any_mutex = true;
    }
  if (any_mutex) os << ";\n";
  for (const auto& d : p.surface) {
    os << "\n";
    if (d.kind == FuncKind::Main) os << "main {\n";
    else os << (d.kind == FuncKind::Task ? "task " : "isr ") << d.name << " {\n";
    detail::print_block(os, d.body, 1);
    os << "}\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Structural equality modulo source lines

inline bool same_expr(const ExprPtr& a, const ExprPtr& b) {
  if (!a || !b) return !a && !b;
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case Expr::Kind::Literal: return a->value == b->value;
    case Expr::Kind::Var: return a->var == b->var && a->name == b->name;
    case Expr::Kind::Unary: return a->uop == b->uop && same_expr(a->lhs, b->lhs);
    case Expr::Kind::Binary:
      return a->bop == b->bop && same_expr(a->lhs, b->lhs) && same_expr(a->rhs, b->rhs);
  }
  return false;
}

inline bool same_command(const Command& a, const Command& b) {
  return a.op == b.op && a.var == b.var && a.func == b.func && a.priority == b.priority &&
         a.target == b.target && a.lock == b.lock && same_expr(a.expr, b.expr);
}

inline bool same_structure(const Program& a, const Program& b) {
  if (a.vars != b.vars || a.max_task_prio != b.max_task_prio) return false;
  if (a.locks.size() != b.locks.size()) return false;
  for (size_t i = 0; i < a.locks.size(); ++i)
    if (a.locks[i].name != b.locks[i].name || a.locks[i].is_mutex != b.locks[i].is_mutex)
      return false;
  if (a.functions.size() != b.functions.size()) return false;
  for (size_t i = 0; i < a.functions.size(); ++i) {
    const Function& fa = a.functions[i];
    const Function& fb = b.functions[i];
    if (fa.name != fb.name || fa.kind != fb.kind || fa.entry != fb.entry || fa.exit != fb.exit ||
        fa.num_locs != fb.num_locs || fa.isr_priority != fb.isr_priority)
      return false;
    if (fa.instrs.size() != fb.instrs.size()) return false;
    for (size_t j = 0; j < fa.instrs.size(); ++j) {
      const Instruction& ia = fa.instrs[j];
      const Instruction& ib = fb.instrs[j];
      if (ia.from != ib.from || ia.to != ib.to || ia.loop_entry != ib.loop_entry ||
          ia.in_loop != ib.in_loop || !same_command(ia.cmd, ib.cmd))
        return false;
    }
  }
  return true;
}

}  // namespace idaracer
