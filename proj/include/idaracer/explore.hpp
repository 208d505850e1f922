#pragma once

#include <deque>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "idaracer/semantics.hpp"

// Bounded breadth-first construction of the reachable state graph. Loop and
// ISR counters live inside the states, so the reached set is independent of
// expansion order; stepBound caps the BFS depth and stateCap the stored
// states, both flagged as truncation.

namespace idaracer {

struct Edge {
  int target = -1;
  Rule rule;
  int16_t thread = -1;
  int16_t func = -1;
  int16_t instr = -1;
};

struct ExploreResult {
  std::vector<State> states;             // id = discovery order, 0 = initial
  std::vector<std::vector<Edge>> edges;  // only filled for expanded states
  std::vector<int> depth;
  std::vector<int> parent_state;  // BFS tree for path reconstruction
  std::vector<int> parent_edge;   // index into edges[parent_state[v]]
  size_t num_transitions = 0;
  bool truncated = false;     // stateCap or stepBound cut the graph
  bool bound_capped = false;  // loop/ISR caps suppressed an enabled step
  std::vector<int> stuck;     // states with no successors and main not at exit
  std::vector<std::tuple<int, int, int>> eval_errors;  // (state, func, instr)
};

inline ExploreResult explore_from(const Program& p, const State& init, const SemOptions& opt) {
  ExploreResult res;
  std::unordered_map<State, int, StateHash> ids;

  res.states.push_back(init);
  res.edges.emplace_back();
  res.depth.push_back(0);
  res.parent_state.push_back(-1);
  res.parent_edge.push_back(-1);
  ids.emplace(init, 0);

  std::deque<int> frontier{0};
  while (!frontier.empty()) {
    int x = frontier.front();
    frontier.pop_front();
    if (res.depth[static_cast<size_t>(x)] >= opt.bounds.step_bound) {
      res.truncated = true;
      continue;
    }

    SuccResult succ = successors(p, res.states[static_cast<size_t>(x)], opt);
    if (succ.bound_capped) res.bound_capped = true;
    for (auto& [fi, ii] : succ.eval_errors) res.eval_errors.emplace_back(x, fi, ii);
    if (succ.list.empty() && !succ.bound_capped) {
      const State& sx = res.states[static_cast<size_t>(x)];
      if (sx.threads[0].pc != p.main_fn().exit) res.stuck.push_back(x);
      continue;
    }

    for (auto& tr : succ.list) {
      ++res.num_transitions;
      int y;
      auto it = ids.find(tr.target);
      if (it != ids.end()) {
        y = it->second;
      } else {
        if (res.states.size() >= opt.bounds.state_cap) {
          res.truncated = true;
          continue;
        }
        y = static_cast<int>(res.states.size());
        res.states.push_back(tr.target);
        res.edges.emplace_back();
        res.depth.push_back(res.depth[static_cast<size_t>(x)] + 1);
        res.parent_state.push_back(x);
        res.parent_edge.push_back(static_cast<int>(res.edges[static_cast<size_t>(x)].size()));
        ids.emplace(std::move(tr.target), y);
        frontier.push_back(y);
      }
      res.edges[static_cast<size_t>(x)].push_back(
          Edge{y, tr.rule, tr.thread, tr.func, tr.instr});
    }
  }
  return res;
}

inline ExploreResult explore(const Program& p, const SemOptions& opt = {}) {
  return explore_from(p, initial_state(p), opt);
}

}  // namespace idaracer
