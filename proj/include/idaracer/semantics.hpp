#pragma once

#include <algorithm>
#include <cassert>
#include <string>
#include <vector>

#include "idaracer/state.hpp"

// The transition relation. Every rule is keyed by the command of the running
// thread's next instruction, the interrupt-entry variant of a ready ISR, or
// one of the instruction-less pseudo rules (unblock, time-slice switch).
// Context-switch (CS) and no-switch (NS) variants are mutually exclusive; the
// CS variant requires the switch to actually move to a strictly preferred
// thread, NS covers the rest.

namespace idaracer {

enum class Rule : uint8_t {
  Skip, SkipInt, Assign, AssignInt, Assume, AssumeInt,
  CreateNs, CreateCs, SetpNs, SetpCs, SusNs, SusCs, ResNs, ResCs,
  Sussch, ResschNs, ResschCs, Disint, DisintInt,
  EnintNs, EnintCs, EnintInt,
  LockAq, LockCs, LockAqInt, Unlock, UnlockInt,
  BlkNs, BlkCs, Start, UnblkNs, UnblkCs, Tshare,
};

inline const char* rule_name(Rule r) {
  switch (r) {
    case Rule::Skip: return "SKIP";
    case Rule::SkipInt: return "SKIP-INT";
    case Rule::Assign: return "ASSIGN";
    case Rule::AssignInt: return "ASSIGN-INT";
    case Rule::Assume: return "ASSUME";
    case Rule::AssumeInt: return "ASSUME-INT";
    case Rule::CreateNs: return "CREATE-NS";
    case Rule::CreateCs: return "CREATE-CS";
    case Rule::SetpNs: return "SETP-NS";
    case Rule::SetpCs: return "SETP-CS";
    case Rule::SusNs: return "SUS-NS";
    case Rule::SusCs: return "SUS-CS";
    case Rule::ResNs: return "RES-NS";
    case Rule::ResCs: return "RES-CS";
    case Rule::Sussch: return "SUSSCH";
    case Rule::ResschNs: return "RESSCH-NS";
    case Rule::ResschCs: return "RESSCH-CS";
    case Rule::Disint: return "DISINT";
    case Rule::DisintInt: return "DISINT-INT";
    case Rule::EnintNs: return "ENINT-NS";
    case Rule::EnintCs: return "ENINT-CS";
    case Rule::EnintInt: return "ENINT-INT";
    case Rule::LockAq: return "LOCK-AQ";
    case Rule::LockCs: return "LOCK-CS";
    case Rule::LockAqInt: return "LOCK-AQ-INT";
    case Rule::Unlock: return "UNLOCK";
    case Rule::UnlockInt: return "UNLOCK-INT";
    case Rule::BlkNs: return "BLK-NS";
    case Rule::BlkCs: return "BLK-CS";
    case Rule::Start: return "START";
    case Rule::UnblkNs: return "UNBLK-NS";
    case Rule::UnblkCs: return "UNBLK-CS";
    case Rule::Tshare: return "TSHARE";
  }
  return "?";
}

struct Bounds {
  int loop_bound = 2;
  int isr_bound = 2;
  int step_bound = 10'000;
  size_t state_cap = 1'000'000;
};

struct SemOptions {
  bool tshare = true;  // round-robin switching between equal-priority tasks
  Bounds bounds;
};

struct Transition {
  Rule rule;
  int16_t thread = -1;  // executor
  int16_t func = -1;    // executed instruction; -1/-1 for pseudo rules
  int16_t instr = -1;
  State target;
};

struct SuccResult {
  std::vector<Transition> list;
  bool bound_capped = false;  // an otherwise-enabled step was suppressed by a bound
  std::vector<std::pair<int, int>> eval_errors;  // (func, instr) with division by zero
};

namespace detail {

// max-priority ready non-ISR threads, optionally excluding one thread
inline std::vector<int> max_ready_tasks(const Program& p, const State& s, int exclude) {
  int best = -1;
  std::vector<int> out;
  for (size_t u = 0; u < s.threads.size(); ++u) {
    if (static_cast<int>(u) == exclude) continue;
    const ThreadState& ts = s.threads[u];
    if (ts.where != ThreadList::Ready || is_isr_thread(p, s, static_cast<int>(u))) continue;
    if (ts.prio > best) {
      best = ts.prio;
      out.clear();
    }
    if (ts.prio == best) out.push_back(static_cast<int>(u));
  }
  return out;
}

inline bool exists_higher_ready_task(const Program& p, const State& s, int prio) {
  for (size_t u = 0; u < s.threads.size(); ++u) {
    const ThreadState& ts = s.threads[u];
    if (ts.where == ThreadList::Ready && !is_isr_thread(p, s, static_cast<int>(u)) &&
        ts.prio > prio)
      return true;
  }
  return false;
}

struct SuccBuilder {
  const Program& p;
  const State& s;
  const SemOptions& opt;
  SuccResult& out;

  bool switching_on() const { return !(s.sched_suspended || s.ints_disabled); }

  void emit(Rule rule, int thread, int func, int instr, State&& target) {
    Transition tr;
    tr.rule = rule;
    tr.thread = static_cast<int16_t>(thread);
    tr.func = static_cast<int16_t>(func);
    tr.instr = static_cast<int16_t>(instr);
    tr.target = std::move(target);
    out.list.push_back(std::move(tr));
  }

  // Advances pc of t over in and charges the loop iteration if the target
  // counter allows it. Returns false (and flags the cap) when exhausted.
  bool advance(State& st, int t, const Instruction& in) {
    ThreadState& ts = st.threads[static_cast<size_t>(t)];
    if (in.loop_entry) {
      uint8_t& c = ts.loop_count[static_cast<size_t>(in.loop_index)];
      if (static_cast<int>(c) >= opt.bounds.loop_bound) {
        out.bound_capped = true;
        return false;
      }
      ++c;
    }
    ts.pc = in.to;
    return true;
  }

  // ISR completion: executing the last statement re-arms the ISR and returns
  // control to the highest-priority ISR caught mid-body, else to the
  // interrupted thread.
  void finish_isr(State& st, int t) {
    const Function& f = p.functions[static_cast<size_t>(st.threads[static_cast<size_t>(t)].func)];
    if (f.kind != FuncKind::Isr) return;
    ThreadState& ts = st.threads[static_cast<size_t>(t)];
    if (ts.pc != f.exit) return;
    ts.pc = f.entry;
    int back = -1;
    for (size_t u = 0; u < st.threads.size(); ++u) {
      if (static_cast<int>(u) == t) continue;
      const ThreadState& us = st.threads[u];
      if (us.where != ThreadList::Ready || !is_isr_thread(p, st, static_cast<int>(u))) continue;
      if (us.pc != p.functions[static_cast<size_t>(us.func)].entry) {
        if (back < 0 || us.prio > st.threads[static_cast<size_t>(back)].prio)
          back = static_cast<int>(u);
      }
    }
    if (back >= 0) {
      st.running = static_cast<int16_t>(back);
    } else {
      st.running = st.interrupted;
      st.interrupted = 0;
    }
  }

  int handle_thread(const Command& c) {
    // suspend/set_priority with NULL target name the running thread
    if (c.target < 0) return s.running;
    long long v = s.env[static_cast<size_t>(c.target)];
    if (v < 0 || v >= static_cast<long long>(s.threads.size())) return -1;
    return static_cast<int>(v);
  }

  // ------------------------------------------------------------------
  // running-thread rules

  void run_instruction(const Instruction& in) {
    const Command& c = in.cmd;
    const int r = s.running;
    const int fi = s.threads[static_cast<size_t>(r)].func;
    const bool task_r = is_task_thread(p, s, r);

    auto base = [&](Rule rule) {
      State st = s;
      if (!advance(st, r, in)) return;
      finish_isr(st, r);
      emit(rule, r, fi, in.index, std::move(st));
    };

    switch (c.op) {
      case Op::Skip:
        base(Rule::Skip);
        return;

      case Op::Assign: {
        long long v;
        try {
          v = eval(*c.expr, s.env);
        } catch (const EvalError&) {
          out.eval_errors.emplace_back(fi, in.index);
          return;
        }
        State st = s;
        if (!advance(st, r, in)) return;
        st.env[static_cast<size_t>(c.var)] = v;
        finish_isr(st, r);
        emit(Rule::Assign, r, fi, in.index, std::move(st));
        return;
      }

      case Op::Assume: {
        bool b;
        try {
          b = eval_bool(*c.expr, s.env);
        } catch (const EvalError&) {
          out.eval_errors.emplace_back(fi, in.index);
          return;
        }
        if (b) base(Rule::Assume);
        return;
      }

      case Op::Create: {
        if (!task_r) return;
        const Function& target = p.functions[static_cast<size_t>(c.func)];
        if (target.kind != FuncKind::Task) return;
        State st = s;
        if (!advance(st, r, in)) return;
        int ts_id = static_cast<int>(st.threads.size());
        ThreadState nt;
        nt.where = ThreadList::Ready;
        nt.prio = static_cast<int16_t>(c.priority);
        nt.func = static_cast<int16_t>(target.index);
        nt.pc = target.entry;
        nt.loop_count.assign(static_cast<size_t>(target.num_loops), 0);
        st.threads.push_back(std::move(nt));
        st.env[static_cast<size_t>(c.var)] = ts_id;
        bool cs = c.priority > s.cur().prio && switching_on();
        if (cs) st.running = static_cast<int16_t>(ts_id);
        emit(cs ? Rule::CreateCs : Rule::CreateNs, r, fi, in.index, std::move(st));
        return;
      }

      case Op::SetPriority: {
        if (!task_r) return;
        int ts = handle_thread(c);
        if (ts < 0 || !is_task_thread(p, s, ts)) return;
        const ThreadState& tst = s.threads[static_cast<size_t>(ts)];
        bool cs = tst.where == ThreadList::Ready && c.priority > s.cur().prio && switching_on();
        State st = s;
        if (!advance(st, r, in)) return;
        st.threads[static_cast<size_t>(ts)].prio = static_cast<int16_t>(c.priority);
        if (cs) st.running = static_cast<int16_t>(ts);
        emit(cs ? Rule::SetpCs : Rule::SetpNs, r, fi, in.index, std::move(st));
        return;
      }

      case Op::Suspend: {
        if (!task_r) return;
        int ts = handle_thread(c);
        if (ts < 0) return;
        if (ts != r) {
          State st = s;
          if (!advance(st, r, in)) return;
          st.threads[static_cast<size_t>(ts)].where = ThreadList::Suspended;
          emit(Rule::SusNs, r, fi, in.index, std::move(st));
          return;
        }
        // self-suspension hands control to the best other ready task
        if (!switching_on()) return;
        for (int cand : max_ready_tasks(p, s, r)) {
          State st = s;
          if (!advance(st, r, in)) return;
          st.threads[static_cast<size_t>(r)].where = ThreadList::Suspended;
          st.running = static_cast<int16_t>(cand);
          emit(Rule::SusCs, r, fi, in.index, std::move(st));
        }
        return;
      }

      case Op::Resume: {
        if (!task_r) return;
        int ts = handle_thread(c);
        if (ts < 0 || ts == r) return;
        const ThreadState& tst = s.threads[static_cast<size_t>(ts)];
        if (tst.where == ThreadList::Blocked) return;
        bool ns_ok = (s.sched_suspended || s.ints_disabled) || s.cur().prio >= tst.prio;
        bool cs_ok = tst.where == ThreadList::Suspended && switching_on() &&
                     tst.prio > s.cur().prio;
        if (!ns_ok && !cs_ok) return;  // ready target above us with switching on: no rule
        State st = s;
        if (!advance(st, r, in)) return;
        st.threads[static_cast<size_t>(ts)].where = ThreadList::Ready;
        if (cs_ok) st.running = static_cast<int16_t>(ts);
        emit(cs_ok ? Rule::ResCs : Rule::ResNs, r, fi, in.index, std::move(st));
        return;
      }

      case Op::SuspendSched: {
        if (!task_r) return;
        State st = s;
        if (!advance(st, r, in)) return;
        st.sched_suspended = true;
        emit(Rule::Sussch, r, fi, in.index, std::move(st));
        return;
      }

      case Op::ResumeSched: {
        if (!task_r) return;
        bool cs = !s.ints_disabled && exists_higher_ready_task(p, s, s.cur().prio);
        if (cs) {
          for (int cand : max_ready_tasks(p, s, -1)) {
            State st = s;
            if (!advance(st, r, in)) return;
            st.sched_suspended = false;
            st.running = static_cast<int16_t>(cand);
            emit(Rule::ResschCs, r, fi, in.index, std::move(st));
          }
        } else {
          State st = s;
          if (!advance(st, r, in)) return;
          st.sched_suspended = false;
          emit(Rule::ResschNs, r, fi, in.index, std::move(st));
        }
        return;
      }

      case Op::DisableInt: {
        State st = s;
        if (!advance(st, r, in)) return;
        st.ints_disabled = true;
        finish_isr(st, r);
        emit(Rule::Disint, r, fi, in.index, std::move(st));
        return;
      }

      case Op::EnableInt: {
        bool cs = task_r && !s.sched_suspended && exists_higher_ready_task(p, s, s.cur().prio);
        if (cs) {
          for (int cand : max_ready_tasks(p, s, -1)) {
            State st = s;
            if (!advance(st, r, in)) return;
            st.ints_disabled = false;
            st.running = static_cast<int16_t>(cand);
            emit(Rule::EnintCs, r, fi, in.index, std::move(st));
          }
        } else {
          State st = s;
          if (!advance(st, r, in)) return;
          st.ints_disabled = false;
          finish_isr(st, r);
          emit(Rule::EnintNs, r, fi, in.index, std::move(st));
        }
        return;
      }

      case Op::Lock: {
        int16_t owner = s.lock_owner[static_cast<size_t>(c.lock)];
        if (owner < 0 || owner == r) {  // free or re-entrant
          State st = s;
          if (!advance(st, r, in)) return;
          st.lock_owner[static_cast<size_t>(c.lock)] = static_cast<int16_t>(r);
          finish_isr(st, r);
          emit(Rule::LockAq, r, fi, in.index, std::move(st));
          return;
        }
        // contended: the acquirer blocks and retries on wake-up (pc unchanged)
        if (!task_r || !switching_on()) return;
        for (int cand : max_ready_tasks(p, s, r)) {
          State st = s;
          st.threads[static_cast<size_t>(r)].where = ThreadList::Blocked;
          st.running = static_cast<int16_t>(cand);
          emit(Rule::LockCs, r, fi, in.index, std::move(st));
        }
        return;
      }

      case Op::Unlock: {
        int16_t owner = s.lock_owner[static_cast<size_t>(c.lock)];
        if (owner >= 0 && owner != r) return;
        State st = s;
        if (!advance(st, r, in)) return;
        st.lock_owner[static_cast<size_t>(c.lock)] = -1;
        finish_isr(st, r);
        emit(Rule::Unlock, r, fi, in.index, std::move(st));
        return;
      }

      case Op::Block: {
        if (!task_r) return;
        if (s.sched_suspended || s.ints_disabled) {
          base(Rule::BlkNs);
          return;
        }
        for (int cand : max_ready_tasks(p, s, r)) {
          State st = s;
          if (!advance(st, r, in)) return;
          st.threads[static_cast<size_t>(r)].where = ThreadList::Blocked;
          st.running = static_cast<int16_t>(cand);
          emit(Rule::BlkCs, r, fi, in.index, std::move(st));
        }
        return;
      }

      case Op::Start: {
        if (r != 0) return;
        // all suspended threads (the ISRs and anything suspended pre-start)
        // become ready; control goes to a max-priority non-ISR thread
        int best = -1;
        std::vector<int> cands;
        for (size_t u = 0; u < s.threads.size(); ++u) {
          const ThreadState& ts = s.threads[u];
          if (ts.where == ThreadList::Blocked || is_isr_thread(p, s, static_cast<int>(u)))
            continue;
          if (ts.prio > best) {
            best = ts.prio;
            cands.clear();
          }
          if (ts.prio == best) cands.push_back(static_cast<int>(u));
        }
        for (int cand : cands) {
          State st = s;
          if (!advance(st, r, in)) return;
          for (auto& ts : st.threads)
            if (ts.where == ThreadList::Suspended) ts.where = ThreadList::Ready;
          st.sched_suspended = false;
          st.ints_disabled = false;
          st.running = static_cast<int16_t>(cand);
          emit(Rule::Start, r, fi, in.index, std::move(st));
        }
        return;
      }
    }
  }

  // ------------------------------------------------------------------
  // interrupt firing: a ready ISR at its entry preempts a lower-priority
  // running thread while interrupts are enabled

  void fire_isr(int t, const Instruction& in) {
    const Command& c = in.cmd;
    const int fi = s.threads[static_cast<size_t>(t)].func;

    Rule rule;
    switch (c.op) {
      case Op::Skip: rule = Rule::SkipInt; break;
      case Op::Assign: rule = Rule::AssignInt; break;
      case Op::Assume: rule = Rule::AssumeInt; break;
      case Op::DisableInt: rule = Rule::DisintInt; break;
      case Op::EnableInt: rule = Rule::EnintInt; break;
      case Op::Lock: rule = Rule::LockAqInt; break;
      case Op::Unlock: rule = Rule::UnlockInt; break;
      default: return;  // other commands cannot appear in a valid ISR
    }

    long long assign_val = 0;
    switch (c.op) {
      case Op::Assign:
        try {
          assign_val = eval(*c.expr, s.env);
        } catch (const EvalError&) {
          out.eval_errors.emplace_back(fi, in.index);
          return;
        }
        break;
      case Op::Assume:
        try {
          if (!eval_bool(*c.expr, s.env)) return;
        } catch (const EvalError&) {
          out.eval_errors.emplace_back(fi, in.index);
          return;
        }
        break;
      case Op::Lock:
        if (s.lock_owner[static_cast<size_t>(c.lock)] >= 0) return;
        break;
      case Op::Unlock:
        if (s.lock_owner[static_cast<size_t>(c.lock)] == t) return;
        break;
      default:
        break;
    }

    if (static_cast<int>(s.threads[static_cast<size_t>(t)].fires) >= opt.bounds.isr_bound) {
      out.bound_capped = true;
      return;
    }

    State st = s;
    st.threads[static_cast<size_t>(t)].fires++;
    if (!advance(st, t, in)) return;
    switch (c.op) {
      case Op::Assign: st.env[static_cast<size_t>(c.var)] = assign_val; break;
      case Op::DisableInt: st.ints_disabled = true; break;
      case Op::EnableInt: st.ints_disabled = false; break;
      case Op::Lock: st.lock_owner[static_cast<size_t>(c.lock)] = static_cast<int16_t>(t); break;
      default: break;
    }
    // nested preemption keeps the interrupted task thread in i
    if (is_task_thread(p, s, s.running)) st.interrupted = s.running;
    st.running = static_cast<int16_t>(t);
    finish_isr(st, t);
    emit(rule, t, fi, in.index, std::move(st));
  }

  // ------------------------------------------------------------------
  // pseudo rules

  void unblock(int t) {
    const ThreadState& ts = s.threads[static_cast<size_t>(t)];
    bool cs = switching_on() && ts.prio > s.cur().prio;
    State st = s;
    st.threads[static_cast<size_t>(t)].where = ThreadList::Ready;
    if (cs) st.running = static_cast<int16_t>(t);
    emit(cs ? Rule::UnblkCs : Rule::UnblkNs, t, -1, -1, std::move(st));
  }

  void tshare(int t) {
    State st = s;
    st.running = static_cast<int16_t>(t);
    emit(Rule::Tshare, t, -1, -1, std::move(st));
  }

  void run() {
    const int r = s.running;
    assert(s.threads[static_cast<size_t>(r)].where == ThreadList::Ready);

    const ThreadState& rt = s.threads[static_cast<size_t>(r)];
    const Function& rf = p.functions[static_cast<size_t>(rt.func)];
    for (int ii : rf.outgoing[static_cast<size_t>(rt.pc)])
      run_instruction(rf.instrs[static_cast<size_t>(ii)]);

    if (!s.ints_disabled) {
      for (size_t t = 0; t < s.threads.size(); ++t) {
        if (static_cast<int>(t) == r) continue;
        const ThreadState& ts = s.threads[t];
        if (ts.where != ThreadList::Ready || !is_isr_thread(p, s, static_cast<int>(t))) continue;
        if (ts.prio <= rt.prio) continue;
        const Function& f = p.functions[static_cast<size_t>(ts.func)];
        if (ts.pc != f.entry) continue;
        for (int ii : f.outgoing[static_cast<size_t>(ts.pc)])
          fire_isr(static_cast<int>(t), f.instrs[static_cast<size_t>(ii)]);
      }
    }

    if (is_task_thread(p, s, r)) {
      for (size_t t = 0; t < s.threads.size(); ++t)
        if (s.threads[t].where == ThreadList::Blocked) unblock(static_cast<int>(t));
    }

    if (opt.tshare && switching_on()) {
      for (size_t t = 0; t < s.threads.size(); ++t) {
        if (static_cast<int>(t) == r) continue;
        const ThreadState& ts = s.threads[t];
        if (ts.where == ThreadList::Ready && is_task_thread(p, s, static_cast<int>(t)) &&
            ts.prio == rt.prio)
          tshare(static_cast<int>(t));
      }
    }

    // fixed order: rule name, executor, instruction, then target hash
    std::sort(out.list.begin(), out.list.end(), [](const Transition& a, const Transition& b) {
      int c = std::string_view(rule_name(a.rule)).compare(rule_name(b.rule));
      if (c != 0) return c < 0;
      if (a.thread != b.thread) return a.thread < b.thread;
      if (a.func != b.func) return a.func < b.func;
      if (a.instr != b.instr) return a.instr < b.instr;
      return StateHash{}(a.target) < StateHash{}(b.target);
    });
  }
};

}  // namespace detail

inline SuccResult successors(const Program& p, const State& s, const SemOptions& opt = {}) {
  SuccResult res;
  detail::SuccBuilder b{p, s, opt, res};
  b.run();
  return res;
}

}  // namespace idaracer
