#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "idaracer/facts.hpp"
#include "idaracer/oracle.hpp"
#include "idaracer/program.hpp"

// Race detection: enumerate conflicting access pairs over shared variables,
// then try to prove for each direction that one statement cannot occur in
// between the bracketing skips of the other (rules C1..C6 over the
// pre-computed analysis facts). A pair is non-racy only when both
// directions are proved.

namespace idaracer {

enum class Access { Read, Write };

struct ConflictPair {
  int var = -1;
  std::string variable;
  StmtId s1, s2;
  Access kind1 = Access::Read, kind2 = Access::Read;
  friend bool operator==(const ConflictPair&, const ConflictPair&) = default;
};

// rule = 0 means the direction could not be eliminated
struct NoibVerdict {
  int rule = 0;
  bool eliminated() const { return rule != 0; }
};

inline std::string rule_label(int rule) {
  return rule == 0 ? std::string("-") : "C" + std::to_string(rule);
}

struct RaceVerdict {
  ConflictPair pair;
  bool non_racy = false;
  NoibVerdict fwd;  // s2 cannot occur in between s1
  NoibVerdict rev;  // s1 cannot occur in between s2
  std::optional<Witness> oracle_witness;  // filled by the harness, not here
};

// -------------------------------------------------------------------------
// Conflicting access pairs

namespace detail {

struct VarAccess {
  StmtId stmt;
  int func = -1;
  bool write = false;
};

// per variable, in statement order, one entry per (statement, variable)
inline std::vector<std::vector<VarAccess>> collect_accesses(const Program& p) {
  std::vector<std::vector<VarAccess>> acc(p.vars.size());
  std::map<std::pair<StmtId, int>, size_t> seen;
  auto add = [&](const StmtId& s, int func, int var, bool write) {
    auto key = std::make_pair(s, var);
    auto it = seen.find(key);
    if (it != seen.end()) {
      acc[static_cast<size_t>(var)][it->second].write |= write;
      return;
    }
    seen[key] = acc[static_cast<size_t>(var)].size();
    acc[static_cast<size_t>(var)].push_back({s, func, write});
  };
  for (auto [id, cmd] : statements(p)) {
    if (cmd->op != Op::Assign && cmd->op != Op::Assume) continue;
    std::vector<int> reads;
    collect_vars(*cmd->expr, reads);
    if (cmd->op == Op::Assign) add(id, id.func, cmd->var, true);
    for (int v : reads) add(id, id.func, v, false);
  }
  return acc;
}

}  // namespace detail

inline std::vector<ConflictPair> conflicting_pairs(const Program& p) {
  // handle variables (written only by create) are thread plumbing, not data
  std::vector<bool> created_into(p.vars.size(), false);
  std::vector<bool> assigned(p.vars.size(), false);
  for (const Function& f : p.functions)
    for (const Instruction& in : f.instrs) {
      if (in.cmd.op == Op::Create) created_into[static_cast<size_t>(in.cmd.var)] = true;
      if (in.cmd.op == Op::Assign) assigned[static_cast<size_t>(in.cmd.var)] = true;
    }

  auto acc = detail::collect_accesses(p);
  std::vector<int> inst = count_instances(p);

  std::vector<ConflictPair> out;
  for (size_t v = 0; v < p.vars.size(); ++v) {
    if (created_into[v] && !assigned[v]) continue;
    auto& list = acc[v];
    std::sort(list.begin(), list.end(),
              [](const detail::VarAccess& a, const detail::VarAccess& b) {
                return a.stmt < b.stmt;
              });
    for (size_t i = 0; i < list.size(); ++i) {
      for (size_t j = i; j < list.size(); ++j) {
        const auto& a = list[i];
        const auto& b = list[j];
        if (!a.write && !b.write) continue;
        if (a.func == b.func) {
          if (inst[static_cast<size_t>(a.func)] < 2) continue;
        } else {
          if (inst[static_cast<size_t>(a.func)] < 1 ||
              inst[static_cast<size_t>(b.func)] < 1)
            continue;
        }
        ConflictPair cp;
        cp.var = static_cast<int>(v);
        cp.variable = p.vars[v];
        cp.s1 = a.stmt;
        cp.s2 = b.stmt;
        cp.kind1 = a.write ? Access::Write : Access::Read;
        cp.kind2 = b.write ? Access::Write : Access::Read;
        out.push_back(std::move(cp));
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const ConflictPair& a, const ConflictPair& b) {
    if (a.variable != b.variable) return a.variable < b.variable;
    if (!(a.s1 == b.s1)) return a.s1 < b.s1;
    return a.s2 < b.s2;
  });
  return out;
}

// -------------------------------------------------------------------------
// The cannot-occur-in-between rules

namespace detail {

inline bool is_isr_fn(const Program& p, int fn) {
  return p.functions[static_cast<size_t>(fn)].kind == FuncKind::Isr;
}

// statements of `fn` whose must-lockset contains `l`
inline std::vector<StmtId> holding_stmts(const AnalysisFacts& f, int fn,
                                         const NotionalLock& l) {
  std::vector<StmtId> out;
  for (const auto& [id, set] : f.locks)
    if (id.func == fn && set.count(l)) out.push_back(id);
  return out;
}

inline PrioInterval hull_over(const AnalysisFacts& f,
                              const std::vector<StmtId>& stmts) {
  PrioInterval h = f.prio.at(stmts.front());
  for (const StmtId& s : stmts) h = h.hull(f.prio.at(s));
  return h;
}

inline bool contains_op(const Program& p, const std::vector<StmtId>& stmts,
                        Op op) {
  for (const StmtId& s : stmts) {
    const Function& fn = p.functions[static_cast<size_t>(s.func)];
    for (const Instruction& in : fn.instrs)
      if (in.id == s && in.cmd.op == op) return true;
  }
  return false;
}

// a statement that can park the executing thread itself
inline bool contains_parking(const Program& p, const HandleInfo& h,
                             const std::vector<StmtId>& stmts) {
  for (const StmtId& s : stmts) {
    const Function& fn = p.functions[static_cast<size_t>(s.func)];
    for (const Instruction& in : fn.instrs) {
      if (!(in.id == s)) continue;
      if (in.cmd.op == Op::Lock || in.cmd.op == Op::Block) return true;
      if (in.cmd.op == Op::Suspend &&
          h.may_target(in.cmd.target, fn.index).count(fn.index))
        return true;
    }
  }
  return false;
}

// can anything other than a thread's own suspend call park a thread of fn?
inline bool externally_suspendable(const Program& p, const HandleInfo& h,
                                   int fn) {
  for (const Function& f : p.functions)
    for (const Instruction& in : f.instrs)
      if (in.cmd.op == Op::Suspend && in.cmd.target >= 0 &&
          h.may_run[static_cast<size_t>(in.cmd.target)].count(fn))
        return true;
  return false;
}

// can fn's code make another thread runnable (create, resume, or release a
// lock it blocks on)?
inline bool can_launch(const Program& p, int fn) {
  for (const Instruction& in : p.functions[static_cast<size_t>(fn)].instrs)
    if (in.cmd.op == Op::Create || in.cmd.op == Op::Resume ||
        in.cmd.op == Op::Unlock)
      return true;
  return false;
}

// Lowering one's own priority never yields the processor, so the caller
// keeps running below threads that are ready. A thread that can hold the
// processor at `threshold` or above and then drop below it therefore voids
// any claim that only high-priority code runs while a window's holder sits
// ready at `threshold`. Per drop site:
//  - the holder's own drops are part of the window's priority hull already
//    (single instance only);
//  - a drop by `executor`, the function running s2, reaches s2 directly;
//    without time slicing stopping at exactly `threshold` is enough, since
//    an equal-priority runner keeps the processor;
//  - anyone else's drop must still hand the sunk level on: a time slice
//    does that directly, and otherwise the dropper can create, resume, or
//    unblock a thread above its own sunk priority. A drop made with the
//    scheduler or interrupts off closes with a rescheduling that returns
//    to the top, which protects everything but the executor itself.
inline bool priority_drop_breaker(const Program& p, const AnalysisFacts& f,
                                  int threshold, int holder, int executor,
                                  bool round_robin) {
  for (const SelfSink& sk : f.self_sinks) {
    if (f.instances[static_cast<size_t>(sk.func)] == 0) continue;
    if (f.max_prio[static_cast<size_t>(sk.func)] < threshold) continue;
    if (sk.func == holder && f.instances[static_cast<size_t>(holder)] <= 1)
      continue;
    if (sk.func == executor) {
      if (round_robin ? sk.value < threshold : sk.value <= threshold)
        return true;
      continue;
    }
    if (sk.value >= threshold) continue;
    if (sk.shielded) continue;
    if (round_robin || can_launch(p, sk.func)) return true;
  }
  return false;
}

// Without time slicing a reschedule still chooses among all ready threads
// of maximal priority. When an exclusion margin holds only with equality, a
// thread parking above the holder diverts the processor to the holder's
// equal-priority peers mid-window. Strictly higher threads appear
// mid-window only by waking from a blocked state, so only functions that
// can block matter.
inline bool equal_level_divert(const Program& p, const AnalysisFacts& f,
                               int threshold, int holder) {
  return equal_level_divert_fn(p, f.instances, f.max_prio, threshold, holder);
}

}  // namespace detail

// Decides whether s2 can be shown to never occur in between s1.
inline NoibVerdict check_noib(const Program& p, const StmtId& s1,
                              const StmtId& s2, const AnalysisFacts& facts,
                              const DetectorConfig& cfg = {}) {
  // with round-robin off, equal-priority preemption is impossible and every
  // strict priority comparison relaxes to greater-or-equal
  auto above = [&](int a, int b) { return cfg.round_robin ? a > b : a >= b; };
  auto foreign = [&](const std::set<int>& fns, int self) {
    std::set<int> out;
    for (int f : fns)
      if (f != self || facts.instances[static_cast<size_t>(self)] >= 2)
        out.insert(f);
    return out;
  };
  const int fn1 = s1.func;
  const int fn2 = s2.func;
  const LockSet& l1 = facts.locks_at(s1);
  const LockSet& l2 = facts.locks_at(s2);

  // C5 (disable interrupts): nothing can preempt s1's bracket with id set;
  // symmetrically, a pre-switch main statement runs before any other thread
  // has ever executed, so it cannot land inside anyone's bracket.
  if (l1.count(NotionalLock{LockKind::IntOff}) || facts.pre_switch.count(s2))
    return {5};

  // C6 (suspend scheduler): with ss set only ISRs can interleave
  if (l1.count(NotionalLock{LockKind::SchedOff}) && !detail::is_isr_fn(p, fn1) &&
      !detail::is_isr_fn(p, fn2))
    return {6};

  // C4 (common lock)
  for (const NotionalLock& l : l1)
    if (l.kind == LockKind::Real && l2.count(l)) return {4};

  // C1 (suspend task): s2's function is provably parked across s1's block.
  // Beyond resumers, a high-priority thread suspending s1's own thread
  // mid-block would let resumers of any priority run, so it is a threat too.
  if (NotionalLock sb{LockKind::SuspBlock, fn2}; l1.count(sb)) {
    auto block = detail::holding_stmts(facts, fn1, sb);
    PrioInterval pq = detail::hull_over(facts, block);
    bool ok = true;
    bool at_margin = false;
    auto resumers = foreign(facts.lists.reslist[static_cast<size_t>(fn2)], fn1);
    for (int r : resumers) {
      if (!above(pq.lo, facts.max_prio[static_cast<size_t>(r)])) ok = false;
      at_margin |= facts.max_prio[static_cast<size_t>(r)] == pq.lo;
    }
    if (!resumers.empty()) {
      for (int su : foreign(facts.lists.susplist[static_cast<size_t>(fn1)], fn1)) {
        if (!above(pq.lo, facts.max_prio[static_cast<size_t>(su)])) ok = false;
        at_margin |= facts.max_prio[static_cast<size_t>(su)] == pq.lo;
      }
      if (ok && at_margin && detail::equal_level_divert(p, facts, pq.lo, fn1))
        ok = false;
      if (ok &&
          detail::priority_drop_breaker(p, facts, pq.lo, fn1, -1,
                                        cfg.round_robin))
        ok = false;
    }
    if (ok && detail::contains_op(p, block, Op::Block) && !resumers.empty())
      ok = false;
    if (ok) return {1};
  }

  // C2 (priority): s2 runs strictly below s1, and nothing high can suspend
  // s1's thread to open a window
  {
    const PrioInterval& p1 = facts.prio_at(s1);
    const PrioInterval& p2 = facts.prio_at(s2);
    bool ok = above(p1.lo, p2.hi);
    bool at_margin = p2.hi == p1.lo;
    for (int su : foreign(facts.lists.susplist[static_cast<size_t>(fn1)], fn1)) {
      if (!above(p1.lo, facts.max_prio[static_cast<size_t>(su)])) ok = false;
      at_margin |= facts.max_prio[static_cast<size_t>(su)] == p1.lo;
    }
    if (ok && at_margin && detail::equal_level_divert(p, facts, p1.lo, fn1))
      ok = false;
    if (ok && detail::priority_drop_breaker(p, facts, p1.lo, fn1, fn2,
                                            cfg.round_robin))
      ok = false;
    if (ok) return {2};
  }

  // C3 (flag): s1 inside a set-flag block, s2 behind a flag-clear check
  for (const NotionalLock& l : l1) {
    if (l.kind != LockKind::FlagSet) continue;
    if (!l2.count(NotionalLock{LockKind::FlagChk, l.index})) continue;
    auto fblock = detail::holding_stmts(facts, fn1, l);
    auto cblock =
        detail::holding_stmts(facts, fn2, NotionalLock{LockKind::FlagChk, l.index});
    PrioInterval pf = detail::hull_over(facts, fblock);
    PrioInterval pc = detail::hull_over(facts, cblock);
    auto resets = foreign(facts.resetters[static_cast<size_t>(l.index)], fn1);
    bool isr_reset = false;
    bool high_reset = false;
    for (int r : resets) {
      if (detail::is_isr_fn(p, r)) isr_reset = true;
      if (facts.max_prio[static_cast<size_t>(r)] >= pf.lo) high_reset = true;
    }
    // a high suspender of s1's thread would open the set-block to arbitrary
    // resetters, exactly as in C1
    bool high_susp = false;
    for (int su : foreign(facts.lists.susplist[static_cast<size_t>(fn1)], fn1))
      if (facts.max_prio[static_cast<size_t>(su)] >= pf.lo) high_susp = true;
    bool branch_a = l1.count(NotionalLock{LockKind::SchedOff}) && !isr_reset;
    bool branch_b = !high_reset && (!high_susp || resets.empty());
    // low-priority resetters get to run mid-window if a drop elsewhere
    // carries the processor below the set-block
    if (branch_b && !resets.empty() &&
        detail::priority_drop_breaker(p, facts, pf.lo, fn1, -1,
                                      cfg.round_robin))
      branch_b = false;
    if (!branch_a && !branch_b) continue;
    if (detail::contains_op(p, fblock, Op::Block) && !resets.empty()) continue;
    // the checking block must be unparkable, or a stalled checker thread
    // could be revived inside it after the flag was raised
    if (detail::externally_suspendable(p, facts.handles, fn2)) continue;
    if (detail::contains_parking(p, facts.handles, cblock)) continue;
    // a drop above the checking block can likewise strand a ready checker
    // mid-block while the flag goes through a full clear-and-set cycle
    if (detail::priority_drop_breaker(p, facts, pc.lo, fn2, fn1,
                                      cfg.round_robin))
      continue;
    if (pf.hi < pc.lo) return {3};
  }

  return {0};
}

// -------------------------------------------------------------------------
// Verdicts

inline std::vector<RaceVerdict> detect_races(const Program& p,
                                             const DetectorConfig& cfg = {}) {
  AnalysisFacts facts = compute_facts(p, cfg);
  std::vector<RaceVerdict> out;
  for (ConflictPair& cp : conflicting_pairs(p)) {
    RaceVerdict rv;
    rv.fwd = check_noib(p, cp.s1, cp.s2, facts, cfg);
    rv.rev = check_noib(p, cp.s2, cp.s1, facts, cfg);
    rv.non_racy = rv.fwd.eliminated() && rv.rev.eliminated();
    rv.pair = std::move(cp);
    out.push_back(std::move(rv));
  }
  return out;
}

}  // namespace idaracer
