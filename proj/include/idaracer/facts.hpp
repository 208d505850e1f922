#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <vector>

#include "idaracer/program.hpp"

// Static pre-analyses over the program CFGs: thread-handle resolution,
// suspend/resume lists, a two-pass priority interval analysis, and a
// must-lockset analysis over real and notional locks. All per-statement
// results describe the program point just before the statement executes.

namespace idaracer {

enum class MutexMode { Plain, Inheritance, Ceiling };

struct DetectorConfig {
  MutexMode mutex_mode = MutexMode::Plain;
  bool round_robin = true;
};

// -------------------------------------------------------------------------
// Domains

struct PrioInterval {
  int lo = 0;
  int hi = 0;
  friend bool operator==(const PrioInterval&, const PrioInterval&) = default;
  PrioInterval hull(const PrioInterval& o) const {
    return {std::min(lo, o.lo), std::max(hi, o.hi)};
  }
  friend std::ostream& operator<<(std::ostream& os, const PrioInterval& iv) {
    return os << "[" << iv.lo << "," << iv.hi << "]";
  }
};

enum class LockKind {
  Real,      // lock(l) .. unlock(l)
  SuspBlock, // suspend(B) .. resume(B), index = suspended function
  FlagSet,   // f := 1 .. f := 0, index = flag variable
  FlagChk,   // then-block guarded by f == 0, index = flag variable
  IntOff,    // disableint .. enableint
  SchedOff,  // suspendsched .. resumesched
};

struct NotionalLock {
  LockKind kind;
  int index = -1;
  friend auto operator<=>(const NotionalLock&, const NotionalLock&) = default;
};

using LockSet = std::set<NotionalLock>;

struct HandleInfo {
  std::vector<std::set<int>> may_run;  // per variable: functions it may run
  std::vector<int> must_run;           // per variable: function or -1

  // target < 0 encodes NULL (the current thread)
  std::set<int> may_target(int var, int enclosing) const {
    if (var < 0) return {enclosing};
    return may_run[static_cast<size_t>(var)];
  }
  int must_target(int var, int enclosing) const {
    if (var < 0) return enclosing;
    return must_run[static_cast<size_t>(var)];
  }
};

struct TaskLists {
  std::vector<std::set<int>> susplist;  // per function: who may suspend it
  std::vector<std::set<int>> reslist;   // per function: who may resume it
};

// a set_priority call that may lower the executing thread's own priority:
// lowering oneself never yields the processor, so the caller keeps running
// below threads that are ready, and a later time slice hands the processor
// on at the lowered level
struct SelfSink {
  int func = -1;         // function whose body contains the call
  int value = 0;         // the new priority
  StmtId stmt;
  bool shielded = false;  // scheduler or interrupts provably off at the call,
                          // so re-enabling reschedules to the top
};

struct AnalysisFacts {
  HandleInfo handles;
  TaskLists lists;
  std::vector<int> instances;             // per function: threads that run it
  std::vector<PrioInterval> entry_prio;   // per function
  std::vector<int> max_prio;              // per function: max hi anywhere
  std::map<StmtId, PrioInterval> prio;    // per statement, just before it
  std::map<StmtId, LockSet> locks;        // per statement, must-held before it
  std::vector<std::set<int>> resetters;   // per variable: functions that may
                                          // write it with anything but 1
  std::set<StmtId> pre_switch;            // main statements provably reached
                                          // before any other thread can run
  std::vector<SelfSink> self_sinks;       // possible self-lowerings

  const PrioInterval& prio_at(const StmtId& s) const { return prio.at(s); }
  const LockSet& locks_at(const StmtId& s) const { return locks.at(s); }
  bool holds(const StmtId& s, const NotionalLock& l) const {
    auto it = locks.find(s);
    return it != locks.end() && it->second.count(l) > 0;
  }
  // the "guaranteed suspended here" annotation for a statement
  std::set<int> suspended_tasks(const StmtId& s) const {
    std::set<int> out;
    auto it = locks.find(s);
    if (it != locks.end())
      for (const NotionalLock& l : it->second)
        if (l.kind == LockKind::SuspBlock) out.insert(l.index);
    return out;
  }
};

// -------------------------------------------------------------------------
// Handle resolution

inline HandleInfo resolve_handles(const Program& p) {
  HandleInfo h;
  h.may_run.assign(p.vars.size(), {});
  h.must_run.assign(p.vars.size(), -1);

  // create sites and plain writes per variable
  std::vector<int> create_sites(p.vars.size(), 0);
  std::vector<int> looped_create(p.vars.size(), 0);
  std::vector<int> other_writes(p.vars.size(), 0);
  std::vector<int> creates_of_fn(p.functions.size(), 0);
  for (const Function& f : p.functions) {
    for (const Instruction& in : f.instrs) {
      if (in.cmd.op == Op::Create) {
        size_t v = static_cast<size_t>(in.cmd.var);
        h.may_run[v].insert(in.cmd.func);
        create_sites[v]++;
        if (in.in_loop) looped_create[v]++;
        creates_of_fn[static_cast<size_t>(in.cmd.func)]++;
      } else if (in.cmd.op == Op::Assign) {
        other_writes[static_cast<size_t>(in.cmd.var)]++;
      }
    }
  }
  for (size_t v = 0; v < p.vars.size(); ++v) {
    // unique reaching definition: one create site, outside any loop, no
    // other writes, and its function is created nowhere else
    if (create_sites[v] == 1 && looped_create[v] == 0 && other_writes[v] == 0) {
      int fn = *h.may_run[v].begin();
      if (creates_of_fn[static_cast<size_t>(fn)] == 1) h.must_run[v] = fn;
    }
  }
  return h;
}

// A handle names its task only in executions where the create already ran;
// before that it still holds 0 and targets main. Keep a definite binding
// only when its create sits in main's pre-switch prefix, which completes
// before any other thread can possibly use the handle.
inline void refine_must_run(const Program& p, HandleInfo& h,
                            const std::set<StmtId>& pre_switch) {
  for (size_t v = 0; v < p.vars.size(); ++v) {
    if (h.must_run[v] < 0) continue;
    bool covered = false;
    for (const Function& f : p.functions)
      for (const Instruction& in : f.instrs)
        if (in.cmd.op == Op::Create && in.cmd.var == static_cast<int>(v))
          covered = pre_switch.count(in.id) > 0;
    if (!covered) h.must_run[v] = -1;
  }
}

// number of threads that may run each function within the loop bound's
// one-unrolling view: main and ISRs once, created tasks per create site
// weighted by the creating function's own thread count (twice for a site
// inside a loop); a create site in a twice-run task runs twice itself.
// A small cap keeps the fixpoint finite on create cycles; downstream only
// distinguishes zero, one, and several.
inline std::vector<int> count_instances(const Program& p) {
  constexpr int cap = 4;
  std::vector<int> n(p.functions.size(), 0), next;
  for (bool changed = true; changed;) {
    next.assign(p.functions.size(), 0);
    next[static_cast<size_t>(p.main_index)] = 1;
    for (const Function& f : p.functions) {
      if (f.kind == FuncKind::Isr) next[static_cast<size_t>(f.index)] = 1;
      int mult = n[static_cast<size_t>(f.index)];
      if (mult == 0) continue;
      for (const Instruction& in : f.instrs)
        if (in.cmd.op == Op::Create) {
          int& t = next[static_cast<size_t>(in.cmd.func)];
          t = std::min(cap, t + mult * (in.in_loop ? 2 : 1));
        }
    }
    changed = next != n;
    n.swap(next);
  }
  return n;
}

// -------------------------------------------------------------------------
// Suspend/resume lists

inline TaskLists suspend_resume_analysis(const Program& p, const HandleInfo& h) {
  TaskLists t;
  t.susplist.assign(p.functions.size(), {});
  t.reslist.assign(p.functions.size(), {});
  for (const Function& f : p.functions) {
    for (const Instruction& in : f.instrs) {
      if (in.cmd.op != Op::Suspend && in.cmd.op != Op::Resume) continue;
      for (int a : h.may_target(in.cmd.target, f.index)) {
        auto& lists = in.cmd.op == Op::Suspend ? t.susplist : t.reslist;
        lists[static_cast<size_t>(a)].insert(f.index);
      }
    }
  }
  return t;
}

// set_priority calls that may apply to the calling thread itself: a NULL
// target, or a handle that may name the caller
inline std::vector<SelfSink> self_sink_sites(const Program& p,
                                             const HandleInfo& h) {
  std::vector<SelfSink> out;
  for (const Function& f : p.functions)
    for (const Instruction& in : f.instrs)
      if (in.cmd.op == Op::SetPriority &&
          h.may_target(in.cmd.target, f.index).count(f.index))
        out.push_back({f.index, in.cmd.priority, in.id, false});
  return out;
}

namespace detail {

// functions that may write var with anything other than the literal 1
inline std::vector<std::set<int>> flag_resetters(const Program& p) {
  std::vector<std::set<int>> r(p.vars.size());
  for (const Function& f : p.functions)
    for (const Instruction& in : f.instrs)
      if (in.cmd.op == Op::Assign) {
        const Expr& e = *in.cmd.expr;
        bool sets_one = e.kind == Expr::Kind::Literal && e.value == 1;
        if (!sets_one) r[static_cast<size_t>(in.cmd.var)].insert(f.index);
      }
  return r;
}

// other threads (excluding a single-instance self) remain in the set
inline bool foreign_member(const std::set<int>& fns, int self, int self_instances) {
  for (int f : fns)
    if (f != self || self_instances >= 2) return true;
  return false;
}

// Without round-robin an equal-priority peer cannot take the processor from a
// runner directly, but it does get a turn whenever a strictly higher thread
// wakes from blocked mid-window, runs, and parks again: the reschedule then
// picks among *all* tied maximum threads. Such a higher thread exists exactly
// when some created function above the threshold can pass through the blocked
// list (an explicit block, or a lock it may contend on).
inline bool equal_level_divert_fn(const Program& p,
                                  const std::vector<int>& instances,
                                  const std::vector<int>& max_prio,
                                  int threshold, int holder) {
  for (const Function& g : p.functions) {
    if (g.kind == FuncKind::Isr) continue;  // ISRs return to the interrupted
    if (instances[static_cast<size_t>(g.index)] == 0) continue;
    if (g.index == holder && instances[static_cast<size_t>(holder)] <= 1)
      continue;
    if (max_prio[static_cast<size_t>(g.index)] <= threshold) continue;
    for (const Instruction& in : g.instrs)
      if (in.cmd.op == Op::Block || in.cmd.op == Op::Lock) return true;
  }
  return false;
}

// flag variable of an `assume(f == 0)`-shaped guard, or -1
inline int checked_flag(const Expr& e) {
  if (e.kind != Expr::Kind::Binary || e.bop != BinOp::Eq) return -1;
  const Expr& l = *e.lhs;
  const Expr& r = *e.rhs;
  if (l.kind == Expr::Kind::Var && r.kind == Expr::Kind::Literal && r.value == 0)
    return l.var;
  if (r.kind == Expr::Kind::Var && l.kind == Expr::Kind::Literal && l.value == 0)
    return r.var;
  return -1;
}

// generic forward dataflow over one function's locations
template <typename Fact, typename Meet, typename Transfer>
std::vector<std::optional<Fact>> forward_flow(const Function& f, Fact entry_fact,
                                              Meet meet, Transfer transfer) {
  std::vector<std::optional<Fact>> in(static_cast<size_t>(f.num_locs));
  in[static_cast<size_t>(f.entry)] = std::move(entry_fact);
  std::deque<int> work{f.entry};
  while (!work.empty()) {
    int loc = work.front();
    work.pop_front();
    const Fact& cur = *in[static_cast<size_t>(loc)];
    for (int ii : f.outgoing[static_cast<size_t>(loc)]) {
      const Instruction& instr = f.instrs[static_cast<size_t>(ii)];
      Fact out = transfer(instr, cur);
      auto& slot = in[static_cast<size_t>(instr.to)];
      if (!slot) {
        slot = std::move(out);
        work.push_back(instr.to);
      } else {
        Fact joined = meet(*slot, out);
        if (!(joined == *slot)) {
          slot = std::move(joined);
          work.push_back(instr.to);
        }
      }
    }
  }
  return in;
}

}  // namespace detail

// -------------------------------------------------------------------------
// Priority analysis

namespace detail {

struct PrioContext {
  const Program& p;
  const HandleInfo& h;
  const std::vector<int>& instances;
  MutexMode mode;
  std::vector<int> ceil;  // per lock: max priority of acquiring tasks
};

inline bool self_flow_priority(const PrioContext& cx, const Function& f,
                               const Command& c) {
  if (c.target < 0) return true;  // set_priority(NULL, p)
  return cx.h.must_target(c.target, f.index) == f.index &&
         cx.instances[static_cast<size_t>(f.index)] <= 1;
}

inline std::vector<std::optional<PrioInterval>> prio_pass1(
    const PrioContext& cx, const Function& f, PrioInterval entry) {
  return forward_flow(
      f, entry,
      [](const PrioInterval& a, const PrioInterval& b) { return a.hull(b); },
      [&](const Instruction& in, const PrioInterval& cur) {
        if (in.cmd.op == Op::SetPriority && self_flow_priority(cx, f, in.cmd))
          return PrioInterval{in.cmd.priority, in.cmd.priority};
        if (in.cmd.op == Op::Lock && cx.mode != MutexMode::Plain &&
            f.kind != FuncKind::Isr &&
            cx.p.locks[static_cast<size_t>(in.cmd.lock)].is_mutex) {
          int c = cx.ceil[static_cast<size_t>(in.cmd.lock)];
          if (cx.mode == MutexMode::Inheritance)
            return PrioInterval{cur.lo, std::max(cur.hi, c)};
          return PrioInterval{c, c};  // ceiling
        }
        return cur;
      });
}

}  // namespace detail

// Per-statement priority intervals; fills entry_prio, max_prio, prio.
inline void priority_analysis(const Program& p, const HandleInfo& h,
                              const std::vector<int>& instances, MutexMode mode,
                              AnalysisFacts& out) {
  // entry intervals from create sites
  out.entry_prio.assign(p.functions.size(), PrioInterval{1, p.max_task_prio});
  std::vector<bool> created(p.functions.size(), false);
  for (const Function& f : p.functions)
    for (const Instruction& in : f.instrs)
      if (in.cmd.op == Op::Create) {
        size_t t = static_cast<size_t>(in.cmd.func);
        PrioInterval site{in.cmd.priority, in.cmd.priority};
        out.entry_prio[t] = created[t] ? out.entry_prio[t].hull(site) : site;
        created[t] = true;
      }
  for (const Function& f : p.functions) {
    size_t i = static_cast<size_t>(f.index);
    if (f.kind == FuncKind::Main) out.entry_prio[i] = {0, 0};
    if (f.kind == FuncKind::Isr) out.entry_prio[i] = {f.isr_priority, f.isr_priority};
  }

  detail::PrioContext cx{p, h, instances, mode, std::vector<int>(p.locks.size(), 0)};

  // fixpoint over mutex ceilings (they depend on the intervals they raise)
  std::vector<std::vector<std::optional<PrioInterval>>> flows(p.functions.size());
  for (int round = 0; round < 2 * p.max_task_prio + 2; ++round) {
    for (const Function& f : p.functions)
      flows[static_cast<size_t>(f.index)] =
          detail::prio_pass1(cx, f, out.entry_prio[static_cast<size_t>(f.index)]);
    if (mode == MutexMode::Plain) break;
    std::vector<int> next(p.locks.size(), 0);
    for (const Function& f : p.functions) {
      if (f.kind == FuncKind::Isr) continue;  // ceilings come from tasks
      int fn_max = out.entry_prio[static_cast<size_t>(f.index)].hi;
      for (const auto& fact : flows[static_cast<size_t>(f.index)])
        if (fact) fn_max = std::max(fn_max, fact->hi);
      for (const Instruction& in : f.instrs)
        if (in.cmd.op == Op::Lock)
          next[static_cast<size_t>(in.cmd.lock)] =
              std::max(next[static_cast<size_t>(in.cmd.lock)], fn_max);
    }
    if (next == cx.ceil) break;
    cx.ceil = std::move(next);
  }

  out.prio.clear();
  for (const Function& f : p.functions) {
    const auto& in_facts = flows[static_cast<size_t>(f.index)];
    for (const Instruction& in : f.instrs) {
      const auto& fact = in_facts[static_cast<size_t>(in.from)];
      out.prio[in.id] =
          fact ? *fact : out.entry_prio[static_cast<size_t>(f.index)];
    }
  }

  // pass 2: external set_priority widens every interval of the target
  for (const Function& f : p.functions) {
    for (const Instruction& in : f.instrs) {
      if (in.cmd.op != Op::SetPriority) continue;
      if (detail::self_flow_priority(cx, f, in.cmd)) continue;
      for (int a : h.may_target(in.cmd.target, f.index)) {
        int pr = in.cmd.priority;
        for (const Instruction& ai : p.functions[static_cast<size_t>(a)].instrs) {
          PrioInterval& iv = out.prio[ai.id];
          iv = {std::min(iv.lo, pr), std::max(iv.hi, pr)};
        }
        PrioInterval& ev = out.entry_prio[static_cast<size_t>(a)];
        ev = {std::min(ev.lo, pr), std::max(ev.hi, pr)};
      }
    }
  }

  out.max_prio.assign(p.functions.size(), 0);
  for (const Function& f : p.functions) {
    size_t i = static_cast<size_t>(f.index);
    out.max_prio[i] = out.entry_prio[i].hi;
    for (const Instruction& in : f.instrs)
      out.max_prio[i] = std::max(out.max_prio[i], out.prio[in.id].hi);
  }
}

// -------------------------------------------------------------------------
// Must-lockset analysis

inline void lockset_analysis(const Program& p, const HandleInfo& h,
                             const TaskLists& lists,
                             const std::vector<int>& instances,
                             const std::vector<std::set<int>>& resetters,
                             const std::vector<SelfSink>& sinks,
                             bool round_robin, AnalysisFacts& out) {
  out.locks.clear();
  for (const Function& f : p.functions) {
    LockSet entry;
    if (f.kind == FuncKind::Main)
      entry = {NotionalLock{LockKind::IntOff}, NotionalLock{LockKind::SchedOff}};

    auto kill_volatile = [&](LockSet& s) {
      // a parked thread cannot prevent other threads from resuming tasks or
      // rewriting flags; facts survive only with no foreign threat
      for (auto it = s.begin(); it != s.end();) {
        bool kill = false;
        if (it->kind == LockKind::SuspBlock)
          kill = detail::foreign_member(
              lists.reslist[static_cast<size_t>(it->index)], f.index,
              instances[static_cast<size_t>(f.index)]);
        else if (it->kind == LockKind::FlagSet)
          kill = detail::foreign_member(resetters[static_cast<size_t>(it->index)],
                                        f.index,
                                        instances[static_cast<size_t>(f.index)]);
        it = kill ? s.erase(it) : std::next(it);
      }
    };

    // can this function's post-drop code make another thread runnable?
    auto can_launch = [&](int g) {
      for (const Instruction& in : p.functions[static_cast<size_t>(g)].instrs)
        if (in.cmd.op == Op::Create || in.cmd.op == Op::Resume ||
            in.cmd.op == Op::Unlock)
          return true;
      return false;
    };

    // A self-lowering elsewhere can carry the processor below `lo`, so
    // suspenders that never reach `lo` themselves still get to run: a time
    // slice hands the sunk level on directly, and even without one the
    // sinker can create, resume, or unblock such a thread above its own
    // sunk priority. This thread's own calls are already reflected in its
    // flow-sensitive priority when it is the only instance.
    auto sink_below = [&](int lo) {
      for (const SelfSink& sk : sinks) {
        if (sk.value >= lo) continue;
        if (instances[static_cast<size_t>(sk.func)] == 0) continue;
        if (out.max_prio[static_cast<size_t>(sk.func)] < lo) continue;
        if (sk.func == f.index && instances[static_cast<size_t>(f.index)] <= 1)
          continue;
        if (round_robin || can_launch(sk.func)) return true;
      }
      return false;
    };

    // Could any member of `members` get the processor while this thread sits
    // at a statement whose minimum priority is `lo`? Strictly higher threads
    // preempt outright (waking from blocked if nothing else), equal ones get
    // a turn from a time slice or from a tie after a higher blocker passes
    // through, and a self-lowering elsewhere opens the door to the rest.
    auto unsafe_member = [&](const std::set<int>& members, int lo) {
      bool any = false;
      for (int m : members) {
        if (m == f.index && instances[static_cast<size_t>(f.index)] <= 1)
          continue;
        if (instances[static_cast<size_t>(m)] == 0) continue;
        any = true;
        int mp = out.max_prio[static_cast<size_t>(m)];
        if (mp > lo) return true;
        if (mp == lo &&
            (round_robin ||
             detail::equal_level_divert_fn(p, instances, out.max_prio, lo,
                                           f.index)))
          return true;
      }
      return any && sink_below(lo);
    };

    // While sitting at a statement, volatile facts survive only if no foreign
    // thread that could undo them — a suspender of this thread, a resumer of
    // the suspended task, a resetter of the flag — can take the processor
    // mid-window. With interrupts or the scheduler off nothing runs at all.
    auto window_kill = [&](const Instruction& in, LockSet s) {
      if (s.count(NotionalLock{LockKind::IntOff}) ||
          s.count(NotionalLock{LockKind::SchedOff}))
        return s;
      int lo = out.prio.at(in.id).lo;
      if (unsafe_member(lists.susplist[static_cast<size_t>(f.index)], lo)) {
        kill_volatile(s);
        return s;
      }
      for (auto it = s.begin(); it != s.end();) {
        bool kill = false;
        if (it->kind == LockKind::SuspBlock)
          kill = unsafe_member(lists.reslist[static_cast<size_t>(it->index)], lo);
        else if (it->kind == LockKind::FlagSet)
          kill = unsafe_member(resetters[static_cast<size_t>(it->index)], lo);
        it = kill ? s.erase(it) : std::next(it);
      }
      return s;
    };

    auto transfer = [&](const Instruction& in, const LockSet& cur) {
      LockSet s = window_kill(in, cur);
      const Command& c = in.cmd;
      switch (c.op) {
        case Op::Lock:
          // a contended lock parks the thread unless preemption is off
          if (!s.count(NotionalLock{LockKind::IntOff}) &&
              !s.count(NotionalLock{LockKind::SchedOff}))
            kill_volatile(s);
          s.insert(NotionalLock{LockKind::Real, c.lock});
          break;
        case Op::Unlock:
          s.erase(NotionalLock{LockKind::Real, c.lock});
          break;
        case Op::Suspend: {
          int must = h.must_target(c.target, f.index);
          auto may = h.may_target(c.target, f.index);
          if (may.count(f.index)) {
            // possibly parks this very thread: everything volatile goes
            kill_volatile(s);
            s.erase(NotionalLock{LockKind::IntOff});
            s.erase(NotionalLock{LockKind::SchedOff});
          }
          // two threads of one function share the statement set; suspending
          // one says nothing about where the other is
          if (must >= 0 && must != f.index &&
              instances[static_cast<size_t>(must)] <= 1)
            s.insert(NotionalLock{LockKind::SuspBlock, must});
          break;
        }
        case Op::Resume:
          for (int a : h.may_target(c.target, f.index))
            s.erase(NotionalLock{LockKind::SuspBlock, a});
          break;
        case Op::Block:
          // a no-op while interrupts or the scheduler are off (BLK-NS)
          if (!s.count(NotionalLock{LockKind::IntOff}) &&
              !s.count(NotionalLock{LockKind::SchedOff}))
            kill_volatile(s);
          break;
        case Op::DisableInt:
          s.insert(NotionalLock{LockKind::IntOff});
          break;
        case Op::EnableInt:
          s.erase(NotionalLock{LockKind::IntOff});
          break;
        case Op::SuspendSched:
          s.insert(NotionalLock{LockKind::SchedOff});
          break;
        case Op::ResumeSched:
          s.erase(NotionalLock{LockKind::SchedOff});
          break;
        case Op::Start:
          s.erase(NotionalLock{LockKind::IntOff});
          s.erase(NotionalLock{LockKind::SchedOff});
          break;
        case Op::Assign: {
          const Expr& e = *c.expr;
          if (e.kind == Expr::Kind::Literal && e.value == 1)
            s.insert(NotionalLock{LockKind::FlagSet, c.var});
          else
            s.erase(NotionalLock{LockKind::FlagSet, c.var});
          break;
        }
        case Op::Assume: {
          int flag = detail::checked_flag(*c.expr);
          if (flag >= 0) s.insert(NotionalLock{LockKind::FlagChk, flag});
          break;
        }
        default:
          break;
      }
      return s;
    };

    auto meet = [](const LockSet& a, const LockSet& b) {
      LockSet r;
      std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                            std::inserter(r, r.begin()));
      return r;
    };

    auto in_facts = detail::forward_flow(f, entry, meet, transfer);
    for (const Instruction& in : f.instrs) {
      const auto& fact = in_facts[static_cast<size_t>(in.from)];
      LockSet s = fact ? window_kill(in, *fact) : LockSet{};
      // a thread parked on a contended lock sits at this very statement
      // while arbitrary other threads run, so on re-arrival the volatile
      // facts of the entry set are stale
      if (in.cmd.op == Op::Lock && !s.count(NotionalLock{LockKind::IntOff}) &&
          !s.count(NotionalLock{LockKind::SchedOff}))
        kill_volatile(s);
      out.locks[in.id] = s;
    }
  }
}

// -------------------------------------------------------------------------
// Pre-switch region of main

// Statements of main that run before any point where another thread could
// possibly have executed: until a start, enableint, resumesched, or a
// possibly-self suspend, main is the only thread that has ever run (the
// initial state has ss = id = true, and every other rule that parks or
// readies threads leaves main running under those flags).
inline std::set<StmtId> pre_switch_analysis(const Program& p,
                                            const HandleInfo& h) {
  std::set<StmtId> out;
  const Function& f = p.main_fn();
  auto in_facts = detail::forward_flow(
      f, true, [](bool a, bool b) { return a && b; },
      [&](const Instruction& in, bool cur) {
        if (!cur) return false;
        switch (in.cmd.op) {
          case Op::Start:
          case Op::EnableInt:
          case Op::ResumeSched:
            return false;
          case Op::Suspend:
            return !h.may_target(in.cmd.target, f.index).count(f.index);
          default:
            return true;
        }
      });
  for (const Instruction& in : f.instrs)
    if (in_facts[static_cast<size_t>(in.from)].value_or(false)) out.insert(in.id);
  return out;
}

// -------------------------------------------------------------------------
// Orchestration

inline AnalysisFacts compute_facts(const Program& p,
                                   const DetectorConfig& cfg = {}) {
  AnalysisFacts facts;
  facts.handles = resolve_handles(p);
  facts.pre_switch = pre_switch_analysis(p, facts.handles);
  refine_must_run(p, facts.handles, facts.pre_switch);
  facts.instances = count_instances(p);
  facts.lists = suspend_resume_analysis(p, facts.handles);
  facts.resetters = detail::flag_resetters(p);
  facts.self_sinks = self_sink_sites(p, facts.handles);
  priority_analysis(p, facts.handles, facts.instances, cfg.mutex_mode, facts);
  lockset_analysis(p, facts.handles, facts.lists, facts.instances,
                   facts.resetters, facts.self_sinks, cfg.round_robin, facts);
  for (SelfSink& sk : facts.self_sinks) {
    const LockSet& held = facts.locks.at(sk.stmt);
    sk.shielded = held.count(NotionalLock{LockKind::SchedOff}) > 0 ||
                  held.count(NotionalLock{LockKind::IntOff}) > 0;
  }
  return facts;
}

}  // namespace idaracer
