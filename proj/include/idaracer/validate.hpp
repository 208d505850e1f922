#pragma once

#include <string>
#include <vector>

#include "idaracer/program.hpp"

// Well-formedness checks beyond the grammar: command placement rules and
// priority ranges. Parsing succeeds on such programs; analysis and execution
// should be gated on an empty diagnostic list.

namespace idaracer {

struct Diagnostic {
  StmtId stmt;
  std::string message;
};

inline std::vector<Diagnostic> validate(const Program& p) {
  std::vector<Diagnostic> out;
  auto bad = [&](const Instruction& in, std::string msg) {
    out.push_back({in.id, std::move(msg)});
  };

  for (const auto& f : p.functions) {
    for (const auto& in : f.instrs) {
      const Command& c = in.cmd;
      if (f.kind == FuncKind::Isr) {
        switch (c.op) {
          case Op::Skip:
          case Op::Assign:
          case Op::Assume:
          case Op::DisableInt:
          case Op::EnableInt:
          case Op::Lock:
          case Op::Unlock:
            break;
          default:
            bad(in, std::string(op_name(c.op)) + " is not allowed in an ISR");
            continue;
        }
      }
      switch (c.op) {
        case Op::Start:
          if (f.kind != FuncKind::Main) bad(in, "start is only allowed in main");
          break;
        case Op::Create: {
          const Function& target = p.functions[static_cast<size_t>(c.func)];
          if (target.kind != FuncKind::Task)
            bad(in, "create target '" + target.name + "' is not a task function");
          if (c.priority < 1 || c.priority > p.max_task_prio)
            bad(in, "create priority " + std::to_string(c.priority) + " outside 1.." +
                        std::to_string(p.max_task_prio));
          break;
        }
        case Op::SetPriority:
          if (c.priority < 1 || c.priority > p.max_task_prio)
            bad(in, "set_priority " + std::to_string(c.priority) + " outside 1.." +
                        std::to_string(p.max_task_prio));
          break;
        default:
          break;
      }
    }
  }
  return out;
}

}  // namespace idaracer
