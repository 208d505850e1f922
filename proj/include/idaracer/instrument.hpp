#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "idaracer/program.hpp"

// Skip-bracketing used by the interleaving oracle: a statement s at edge
// (l, c, l') is replaced by (l, skip, a), (a, c, b), (b, skip, l') so that a
// thread whose pc sits at a or b is "inside" a dynamic occurrence of s. The
// bracketed command keeps its instruction index, statement id and loop-entry
// marking; the two skips carry the same statement id with Pre/Post roles.

namespace idaracer {

struct Bracket {
  StmtId stmt;
  int func = -1;
  int cmd_instr = -1;   // original index, now running a -> b
  int pre_instr = -1;   // appended skip l -> a
  int post_instr = -1;  // appended skip b -> l'
  int loc_a = -1;
  int loc_b = -1;
};

struct Instrumented {
  Program prog;
  std::vector<Bracket> brackets;  // in target order, duplicates dropped

  const Bracket& bracket_for(const StmtId& s) const {
    for (const Bracket& b : brackets)
      if (b.stmt == s) return b;
    throw std::invalid_argument("no bracket for statement " +
                                std::to_string(s.line));
  }
};

inline Instrumented instrument(const Program& p,
                               const std::vector<StmtId>& targets) {
  Instrumented out;
  out.prog = p;
  for (const StmtId& s : targets) {
    bool dup = false;
    for (const Bracket& b : out.brackets) dup = dup || b.stmt == s;
    if (dup) continue;

    auto loc = out.prog.find_instr_index(s);
    if (!loc)
      throw std::invalid_argument("unknown statement " + p.stmt_string(s));
    auto [fi, ii] = *loc;
    Function& f = out.prog.functions[static_cast<size_t>(fi)];
    Instruction& cmd = f.instrs[static_cast<size_t>(ii)];
    if (cmd.cmd.op != Op::Assign && cmd.cmd.op != Op::Assume)
      throw std::invalid_argument(p.stmt_string(s) +
                                  " is not an assignment or assume");

    Bracket b;
    b.stmt = s;
    b.func = fi;
    b.cmd_instr = ii;
    b.loc_a = f.num_locs++;
    b.loc_b = f.num_locs++;

    Instruction pre;
    pre.from = cmd.from;
    pre.to = b.loc_a;
    pre.cmd.op = Op::Skip;
    pre.id = cmd.id;
    pre.role = StmtRole::Pre;
    pre.in_loop = cmd.in_loop;

    Instruction post;
    post.from = b.loc_b;
    post.to = cmd.to;
    post.cmd.op = Op::Skip;
    post.id = cmd.id;
    post.role = StmtRole::Post;
    post.in_loop = cmd.in_loop;

    cmd.from = b.loc_a;
    cmd.to = b.loc_b;

    b.pre_instr = static_cast<int>(f.instrs.size());
    pre.index = b.pre_instr;
    f.instrs.push_back(pre);
    b.post_instr = static_cast<int>(f.instrs.size());
    post.index = b.post_instr;
    f.instrs.push_back(post);
    f.rebuild_outgoing();

    out.brackets.push_back(b);
  }
  return out;
}

}  // namespace idaracer
