#pragma once

#include <cstdint>
#include <vector>

#include "idaracer/program.hpp"

// Scheduler state: thread lists B/S/R, priorities P, lock ownership A, thread
// functions F, program counters pc, store phi, running thread r, interrupted
// thread i, and the ss/id scheduler flags. Exploration bounds (per-thread loop
// iteration counts, per-ISR firing counts) are part of the state so that the
// explored set does not depend on frontier order.

namespace idaracer {

enum class ThreadList : uint8_t { Ready = 0, Suspended = 1, Blocked = 2 };

struct ThreadState {
  ThreadList where = ThreadList::Ready;
  int16_t prio = 0;
  int16_t func = -1;
  int32_t pc = 0;
  uint8_t fires = 0;                // ISR activations so far
  std::vector<uint8_t> loop_count;  // per loop of this thread's function

  friend bool operator==(const ThreadState&, const ThreadState&) = default;
};

struct State {
  std::vector<ThreadState> threads;  // index = thread id; 0 = main, 1..k = ISRs
  std::vector<long long> env;        // index = variable id; handles hold thread ids
  std::vector<int16_t> lock_owner;   // -1 = undef
  int16_t running = 0;
  int16_t interrupted = 0;
  bool sched_suspended = true;
  bool ints_disabled = true;

  friend bool operator==(const State&, const State&) = default;

  const ThreadState& cur() const { return threads[static_cast<size_t>(running)]; }
};

struct StateHash {
  static void mix(size_t& h, size_t v) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  size_t operator()(const State& s) const {
    size_t h = 0xcbf29ce484222325ULL;
    for (const auto& t : s.threads) {
      mix(h, static_cast<size_t>(t.where));
      mix(h, static_cast<size_t>(static_cast<uint16_t>(t.prio)));
      mix(h, static_cast<size_t>(static_cast<uint16_t>(t.func)));
      mix(h, static_cast<size_t>(static_cast<uint32_t>(t.pc)));
      mix(h, t.fires);
      for (uint8_t c : t.loop_count) mix(h, c);
    }
    for (long long v : s.env) mix(h, static_cast<size_t>(static_cast<unsigned long long>(v)));
    for (int16_t o : s.lock_owner) mix(h, static_cast<size_t>(static_cast<uint16_t>(o)));
    mix(h, static_cast<size_t>(static_cast<uint16_t>(s.running)));
    mix(h, static_cast<size_t>(static_cast<uint16_t>(s.interrupted)));
    mix(h, (s.sched_suspended ? 2u : 0u) | (s.ints_disabled ? 1u : 0u));
    return h;
  }
};

// Initial state: main running with priority 0, ISR threads 1..k suspended at
// their entries with fixed priorities m+j, no created tasks, all variables 0,
// all locks free, scheduler suspended and interrupts disabled.
inline State initial_state(const Program& p) {
  State s;
  ThreadState main_t;
  main_t.where = ThreadList::Ready;
  main_t.prio = 0;
  main_t.func = static_cast<int16_t>(p.main_index);
  main_t.pc = p.main_fn().entry;
  main_t.loop_count.assign(static_cast<size_t>(p.main_fn().num_loops), 0);
  s.threads.push_back(std::move(main_t));
  for (const auto& f : p.functions) {
    if (f.kind != FuncKind::Isr) continue;
    ThreadState t;
    t.where = ThreadList::Suspended;
    t.prio = static_cast<int16_t>(f.isr_priority);
    t.func = static_cast<int16_t>(f.index);
    t.pc = f.entry;
    t.loop_count.assign(static_cast<size_t>(f.num_loops), 0);
    s.threads.push_back(std::move(t));
  }
  s.env.assign(p.vars.size(), 0);
  s.lock_owner.assign(p.locks.size(), -1);
  return s;
}

inline bool is_isr_thread(const Program& p, const State& s, int t) {
  return p.functions[static_cast<size_t>(s.threads[static_cast<size_t>(t)].func)].kind ==
         FuncKind::Isr;
}
// "task" in rule guards means any non-ISR thread, including main.
inline bool is_task_thread(const Program& p, const State& s, int t) {
  return !is_isr_thread(p, s, t);
}

}  // namespace idaracer
