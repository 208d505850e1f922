#pragma once

#include <algorithm>
#include <deque>
#include <optional>
#include <unordered_map>
#include <vector>

#include "idaracer/explore.hpp"
#include "idaracer/instrument.hpp"

// Ground-truth interleaving queries over the bounded state graph.
//
// occurs_in_between(s1, s2): explores the program with s1 skip-bracketed and
// looks for an execution where some thread v runs s2 while a different thread
// u (running s1's function) sits between the brackets — and u then completes
// the bracket. mhp(s1, s2): both statements bracketed; true iff one bracket
// begins strictly inside the other. Verdicts are relative to the exploration
// bounds; a returned witness is an unconditional, replayable trace.

namespace idaracer {

struct Witness {
  std::vector<Transition> steps;  // from the initial state
  std::vector<StmtId> stmts;      // per step; func<0 for scheduler-only steps
  size_t pre_index = 0;           // u opens its bracket
  size_t occurrence_index = 0;    // the intervening event
  size_t post_index = 0;          // u closes its bracket (last step)
};

struct OibOutcome {
  std::optional<Witness> witness;
  bool truncated = false;
  bool bound_capped = false;
  size_t states_explored = 0;
};

struct MhpOutcome {
  bool value = false;
  std::optional<Witness> witness;
  bool truncated = false;
  bool bound_capped = false;
  size_t states_explored = 0;
};

namespace detail {

inline void check_race_stmt(const Program& p, const StmtId& s) {
  const Instruction* in = p.find_instr(s);
  if (!in) throw std::invalid_argument("unknown statement " + p.stmt_string(s));
  if (in->cmd.op != Op::Assign && in->cmd.op != Op::Assume)
    throw std::invalid_argument(p.stmt_string(s) +
                                " is not an assignment or assume");
}

// Shared per-exploration scaffolding for the two queries.
struct OracleGraph {
  const Program& p;
  ExploreResult g;
  std::vector<std::vector<int>> rev;  // reverse adjacency by state id
  // thread id -> states from which that thread can still run a given
  // instruction (memoized per (thread, func, instr))
  std::unordered_map<long long, std::vector<char>> reach_memo;

  OracleGraph(const Program& prog, const SemOptions& opt)
      : p(prog), g(explore(prog, opt)) {
    rev.resize(g.states.size());
    for (size_t x = 0; x < g.edges.size(); ++x)
      for (const Edge& e : g.edges[x]) rev[static_cast<size_t>(e.target)].push_back(static_cast<int>(x));
  }

  // true iff from state y there is a path ending in thread u executing
  // instruction (func, instr)
  bool can_reach_event(int y, int u, int func, int instr) {
    long long key = (static_cast<long long>(u) << 32) ^
                    (static_cast<long long>(func) << 16) ^ instr;
    auto it = reach_memo.find(key);
    if (it == reach_memo.end()) {
      std::vector<char> ok(g.states.size(), 0);
      std::deque<int> work;
      for (size_t x = 0; x < g.edges.size(); ++x)
        for (const Edge& e : g.edges[x])
          if (e.thread == u && e.func == func && e.instr == instr && !ok[x]) {
            ok[x] = 1;
            work.push_back(static_cast<int>(x));
          }
      while (!work.empty()) {
        int x = work.front();
        work.pop_front();
        for (int pr : rev[static_cast<size_t>(x)])
          if (!ok[static_cast<size_t>(pr)]) {
            ok[static_cast<size_t>(pr)] = 1;
            work.push_back(pr);
          }
      }
      it = reach_memo.emplace(key, std::move(ok)).first;
    }
    return it->second[static_cast<size_t>(y)] != 0;
  }

  Transition to_transition(int state, int edge_idx) const {
    const Edge& e = g.edges[static_cast<size_t>(state)][static_cast<size_t>(edge_idx)];
    Transition tr;
    tr.rule = e.rule;
    tr.thread = e.thread;
    tr.func = e.func;
    tr.instr = e.instr;
    tr.target = g.states[static_cast<size_t>(e.target)];
    return tr;
  }

  // BFS-tree path from the initial state to x, as (state, edge index) pairs
  std::vector<std::pair<int, int>> tree_path(int x) const {
    std::vector<std::pair<int, int>> out;
    while (g.parent_state[static_cast<size_t>(x)] >= 0) {
      out.emplace_back(g.parent_state[static_cast<size_t>(x)],
                       g.parent_edge[static_cast<size_t>(x)]);
      x = g.parent_state[static_cast<size_t>(x)];
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

  // Shortest continuation from y whose final step is u executing
  // (func,instr); empty optional when unreachable.
  std::optional<std::vector<std::pair<int, int>>> path_to_event(int y, int u,
                                                                int func,
                                                                int instr) const {
    std::unordered_map<int, std::pair<int, int>> parent;  // state -> (prev, edge)
    std::deque<int> work{y};
    parent.emplace(y, std::make_pair(-1, -1));
    while (!work.empty()) {
      int x = work.front();
      work.pop_front();
      const auto& es = g.edges[static_cast<size_t>(x)];
      for (size_t k = 0; k < es.size(); ++k) {
        const Edge& e = es[k];
        if (e.thread == u && e.func == func && e.instr == instr) {
          std::vector<std::pair<int, int>> out{{x, static_cast<int>(k)}};
          int cur = x;
          while (parent[cur].first >= 0) {
            out.emplace_back(parent[cur].first, parent[cur].second);
            cur = parent[cur].first;
          }
          std::reverse(out.begin(), out.end());
          return out;
        }
      }
      for (size_t k = 0; k < es.size(); ++k) {
        int t = es[k].target;
        if (!parent.count(t)) {
          parent.emplace(t, std::make_pair(x, static_cast<int>(k)));
          work.push_back(t);
        }
      }
    }
    return std::nullopt;
  }

  // Assembles the full witness: BFS prefix to x, the intervening edge, then
  // the continuation closing u's bracket around (the instrumented) s1.
  Witness build_witness(int x, int edge_idx, int u, const Bracket& b) const {
    Witness w;
    auto prefix = tree_path(x);
    for (auto& [st, ei] : prefix) w.steps.push_back(to_transition(st, ei));
    w.occurrence_index = w.steps.size();
    w.steps.push_back(to_transition(x, edge_idx));
    int y = g.edges[static_cast<size_t>(x)][static_cast<size_t>(edge_idx)].target;
    auto tail = path_to_event(y, u, b.func, b.post_instr);
    for (auto& [st, ei] : *tail) w.steps.push_back(to_transition(st, ei));
    w.post_index = w.steps.size() - 1;
    // u entered its current bracket at the last pre-skip before the occurrence
    for (size_t i = w.occurrence_index; i-- > 0;) {
      const Transition& tr = w.steps[i];
      if (tr.thread == u && tr.func == b.func && tr.instr == b.pre_instr) {
        w.pre_index = i;
        break;
      }
    }
    for (const Transition& tr : w.steps) {
      if (tr.func >= 0)
        w.stmts.push_back(
            p.functions[static_cast<size_t>(tr.func)].instrs[static_cast<size_t>(tr.instr)].id);
      else
        w.stmts.push_back(StmtId{-1, -1, -1});
    }
    return w;
  }

  // Threads other than v currently sitting inside bracket b, lowest id first.
  std::vector<int> inside_bracket(const State& s, int v, const Bracket& b) const {
    std::vector<int> out;
    for (size_t u = 0; u < s.threads.size(); ++u) {
      if (static_cast<int>(u) == v) continue;
      if (s.threads[u].func != b.func) continue;
      if (s.threads[u].pc == b.loc_a || s.threads[u].pc == b.loc_b)
        out.push_back(static_cast<int>(u));
    }
    return out;
  }
};

}  // namespace detail

namespace detail {

inline OibOutcome oib_search(OracleGraph& og, const Bracket& b1,
                             const std::pair<int, int>& occ) {
  OibOutcome out;
  out.truncated = og.g.truncated;
  out.bound_capped = og.g.bound_capped;
  out.states_explored = og.g.states.size();

  for (size_t x = 0; x < og.g.edges.size() && !out.witness; ++x) {
    const auto& es = og.g.edges[x];
    for (size_t k = 0; k < es.size() && !out.witness; ++k) {
      const Edge& e = es[k];
      if (e.func != occ.first || e.instr != occ.second) continue;
      for (int u : og.inside_bracket(og.g.states[x], e.thread, b1)) {
        if (og.can_reach_event(e.target, u, b1.func, b1.post_instr)) {
          out.witness = og.build_witness(static_cast<int>(x),
                                         static_cast<int>(k), u, b1);
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace detail

inline OibOutcome occurs_in_between_ex(const Program& p, const StmtId& s1,
                                       const StmtId& s2,
                                       const SemOptions& opt = {}) {
  detail::check_race_stmt(p, s1);
  detail::check_race_stmt(p, s2);
  Instrumented inst = instrument(p, {s1});
  detail::OracleGraph og(inst.prog, opt);
  return detail::oib_search(og, inst.brackets[0],
                            *inst.prog.find_instr_index(s2));
}

// One instrumented exploration of s1 answers occurs-in-between for any
// number of intervening statements.
inline std::vector<OibOutcome> occurs_in_between_batch(
    const Program& p, const StmtId& s1, const std::vector<StmtId>& s2s,
    const SemOptions& opt = {}) {
  detail::check_race_stmt(p, s1);
  for (const StmtId& s2 : s2s) detail::check_race_stmt(p, s2);
  Instrumented inst = instrument(p, {s1});
  detail::OracleGraph og(inst.prog, opt);
  std::vector<OibOutcome> outs;
  outs.reserve(s2s.size());
  for (const StmtId& s2 : s2s)
    outs.push_back(detail::oib_search(og, inst.brackets[0],
                                      *inst.prog.find_instr_index(s2)));
  return outs;
}

inline std::optional<Witness> occurs_in_between(const Program& p,
                                                const StmtId& s1,
                                                const StmtId& s2,
                                                const SemOptions& opt = {}) {
  return occurs_in_between_ex(p, s1, s2, opt).witness;
}

inline MhpOutcome mhp_ex(const Program& p, const StmtId& s1, const StmtId& s2,
                         const SemOptions& opt = {}) {
  detail::check_race_stmt(p, s1);
  detail::check_race_stmt(p, s2);
  Instrumented inst = instrument(p, {s1, s2});
  const Bracket& b1 = inst.brackets[0];
  const Bracket& b2 = inst.brackets.back();  // == b1 for a self pair
  detail::OracleGraph og(inst.prog, opt);

  MhpOutcome out;
  out.truncated = og.g.truncated;
  out.bound_capped = og.g.bound_capped;
  out.states_explored = og.g.states.size();

  // (enclosing bracket, beginning bracket) in both orientations
  std::vector<std::pair<const Bracket*, const Bracket*>> kinds{{&b1, &b2}};
  if (inst.brackets.size() > 1) kinds.push_back({&b2, &b1});

  for (size_t x = 0; x < og.g.edges.size() && !out.value; ++x) {
    const auto& es = og.g.edges[x];
    for (size_t k = 0; k < es.size() && !out.value; ++k) {
      const Edge& e = es[k];
      for (auto [outer, inner] : kinds) {
        if (e.func != inner->func || e.instr != inner->pre_instr) continue;
        for (int u : og.inside_bracket(og.g.states[x], e.thread, *outer)) {
          if (og.can_reach_event(e.target, u, outer->func, outer->post_instr)) {
            out.value = true;
            out.witness = og.build_witness(static_cast<int>(x),
                                           static_cast<int>(k), u, *outer);
            break;
          }
        }
        if (out.value) break;
      }
    }
  }
  return out;
}

inline bool mhp(const Program& p, const StmtId& s1, const StmtId& s2,
                const SemOptions& opt = {}) {
  return mhp_ex(p, s1, s2, opt).value;
}

// Replays a witness against the instrumented program it was found in: every
// step must be one of the current successors and reproduce the recorded
// state exactly. `instrumented` is instrument(p, {s1}) for an
// occurs-in-between witness and instrument(p, {s1, s2}) for an overlap
// witness; `opt` must match the query's options.
inline bool replay_witness(const Program& instrumented, const Witness& w,
                           const SemOptions& opt = {}) {
  State s = initial_state(instrumented);
  for (const Transition& step : w.steps) {
    auto succ = successors(instrumented, s, opt);
    bool matched = false;
    for (const Transition& tr : succ.list) {
      if (tr.rule == step.rule && tr.thread == step.thread &&
          tr.func == step.func && tr.instr == step.instr &&
          tr.target == step.target) {
        s = tr.target;
        matched = true;
        break;
      }
    }
    if (!matched) return false;
  }
  return true;
}

}  // namespace idaracer
