#pragma once

#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "idaracer/detector.hpp"
#include "idaracer/oracle.hpp"
#include "idaracer/parser.hpp"
#include "idaracer/validate.hpp"

// Random-program soundness audit: generate small valid programs, run the
// detector under both scheduling configurations, and check every eliminated
// direction against the interpreter. Any witness for an eliminated direction
// is a counterexample and reported with the program text verbatim.

namespace idaracer {

struct FuzzConfig {
  int max_tasks = 3;
  int max_isrs = 1;
  int max_stmts = 6;  // top-level statement units per function body
};

struct FuzzCounterexample {
  std::string program;    // source text, replayable with the same bounds
  std::string direction;  // which eliminated direction had a witness
  int rule = 0;
  bool round_robin = true;
};

struct FuzzReport {
  int programs = 0;
  int directions = 0;  // eliminated directions audited
  std::map<int, int> eliminated_by_rule;
  std::vector<FuzzCounterexample> counterexamples;
};

namespace detail {

// All randomness goes through modulo draws on a fixed-width engine so that a
// seed produces the same corpus on every platform.
class FuzzGen {
 public:
  FuzzGen(std::mt19937_64& rng, const FuzzConfig& fc) : rng_(rng), fc_(fc) {}

  std::string program() {
    os_.str("");
    ntasks_ = 1 + pick(fc_.max_tasks);
    nisrs_ = fc_.max_isrs > 0 ? pick(fc_.max_isrs + 1) : 0;
    handles_.clear();

    // main: create every task once (one task possibly twice), then start
    os_ << "main {\n";
    if (chance(30)) os_ << "  g := 0;\n";
    int h = 0;
    for (int t = 0; t < ntasks_; ++t) {
      ++h;
      handles_.push_back("h" + std::to_string(h));
      os_ << "  create(t" << (t + 1) << ", " << (1 + pick(3)) << ", h" << h << ");\n";
    }
    if (chance(25)) {
      ++h;
      handles_.push_back("h" + std::to_string(h));
      os_ << "  create(t" << (1 + pick(ntasks_)) << ", " << (1 + pick(3)) << ", h"
          << h << ");\n";
    }
    os_ << "  start;\n}\n";

    for (int t = 0; t < ntasks_; ++t) {
      os_ << "task t" << (t + 1) << " {\n";
      body(false);
      os_ << "}\n";
    }
    for (int i = 0; i < nisrs_; ++i) {
      os_ << "isr i" << (i + 1) << " {\n";
      body(true);
      os_ << "}\n";
    }
    return os_.str();
  }

 private:
  int pick(int n) { return static_cast<int>(rng_() % static_cast<uint64_t>(n)); }
  bool chance(int pct) { return pick(100) < pct; }

  std::string rand_var() {
    static const char* pool[] = {"g", "x", "y"};
    return pool[pick(3)];
  }

  std::string rand_expr() {
    switch (pick(6)) {
      case 0: return "0";
      case 1: return "1";
      case 2: return "5";
      case 3: return rand_var();
      case 4: return rand_var() + " + 1";
      default: return rand_var() + " - 1";
    }
  }

  std::string rand_lock() { return pick(2) == 0 ? "l1" : "l2"; }

  std::string rand_handle() {
    return handles_[static_cast<size_t>(pick(static_cast<int>(handles_.size())))];
  }

  void simple(bool isr, const std::string& pad) {
    int k = isr ? pick(2) : pick(8);
    switch (k) {
      case 0: os_ << pad << rand_var() << " := " << rand_expr() << ";\n"; break;
      case 1: os_ << pad << "skip;\n"; break;
      case 2: os_ << pad << "block;\n"; break;
      case 3: os_ << pad << "suspend(" << rand_handle() << ");\n"; break;
      case 4: os_ << pad << "resume(" << rand_handle() << ");\n"; break;
      case 5: os_ << pad << "suspend(NULL);\n"; break;
      case 6:
        os_ << pad << "set_priority(" << rand_handle() << ", " << (1 + pick(3))
            << ");\n";
        break;
      default:
        os_ << pad << "set_priority(NULL, " << (1 + pick(3)) << ");\n";
        break;
    }
  }

  void inner(bool isr, const std::string& pad) {
    int count = 1 + pick(2);
    for (int i = 0; i < count; ++i) simple(isr, pad);
  }

  void unit(bool isr) {
    int k = pick(isr ? 6 : 8);
    switch (k) {
      case 0:
        simple(isr, "  ");
        break;
      case 1: {  // lock block
        std::string l = rand_lock();
        os_ << "  lock(" << l << ");\n";
        inner(isr, "  ");
        os_ << "  unlock(" << l << ");\n";
        break;
      }
      case 2:  // interrupts-off block
        os_ << "  disableint;\n";
        inner(isr, "  ");
        os_ << "  enableint;\n";
        break;
      case 3:  // flag block
        os_ << "  f := 1;\n";
        inner(isr, "  ");
        os_ << "  f := 0;\n";
        break;
      case 4:  // guarded block
        os_ << "  if (f == 0) {\n";
        inner(isr, "    ");
        os_ << "  }\n";
        break;
      case 5:  // data branch
        os_ << "  if (" << rand_var() << " == 0) {\n";
        inner(isr, "    ");
        if (chance(40)) {
          os_ << "  } else {\n";
          inner(isr, "    ");
        }
        os_ << "  }\n";
        break;
      case 6:  // scheduler-off block (tasks only)
        os_ << "  suspendsched;\n";
        inner(isr, "  ");
        os_ << "  resumesched;\n";
        break;
      default:  // loop (tasks only); the block keeps other threads runnable
        os_ << "  for (;;) {\n";
        inner(isr, "    ");
        os_ << "    block;\n";
        os_ << "  }\n";
        break;
    }
  }

  void body(bool isr) {
    int n = 1 + pick(fc_.max_stmts);
    for (int i = 0; i < n; ++i) unit(isr);
  }

  std::mt19937_64& rng_;
  const FuzzConfig& fc_;
  std::ostringstream os_;
  int ntasks_ = 0;
  int nisrs_ = 0;
  std::vector<std::string> handles_;
};

}  // namespace detail

inline std::string fuzz_program_text(std::mt19937_64& rng,
                                     const FuzzConfig& fc = {}) {
  detail::FuzzGen gen(rng, fc);
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::string text = gen.program();
    try {
      Program p = parse_program(text);
      if (validate(p).empty()) return text;
    } catch (const std::exception&) {
    }
  }
  throw std::logic_error("random program generation failed to converge");
}

// Audits one program under one configuration, appending to the report.
inline void audit_program(const Program& p, const std::string& text,
                          const DetectorConfig& cfg, const Bounds& b,
                          FuzzReport& report) {
  std::vector<RaceVerdict> verdicts = detect_races(p, cfg);
  SemOptions opt;
  opt.tshare = cfg.round_robin;
  opt.bounds = b;

  // group eliminated directions by their bracketed statement: one
  // exploration answers every intervening-statement query for it
  std::map<StmtId, std::vector<std::pair<StmtId, int>>> by_s1;
  for (const RaceVerdict& v : verdicts) {
    if (v.fwd.eliminated())
      by_s1[v.pair.s1].emplace_back(v.pair.s2, v.fwd.rule);
    if (v.rev.eliminated())
      by_s1[v.pair.s2].emplace_back(v.pair.s1, v.rev.rule);
  }
  for (const auto& [s1, targets] : by_s1) {
    std::vector<StmtId> s2s;
    for (const auto& [s2, rule] : targets) s2s.push_back(s2);
    std::vector<OibOutcome> outs = occurs_in_between_batch(p, s1, s2s, opt);
    for (size_t i = 0; i < targets.size(); ++i) {
      ++report.directions;
      ++report.eliminated_by_rule[targets[i].second];
      if (outs[i].witness) {
        FuzzCounterexample cx;
        cx.program = text;
        cx.direction = p.stmt_string(s1) + " -> " + p.stmt_string(targets[i].first);
        cx.rule = targets[i].second;
        cx.round_robin = cfg.round_robin;
        report.counterexamples.push_back(std::move(cx));
      }
    }
  }
}

inline FuzzReport fuzz_soundness(unsigned long long seed, int n,
                                 const FuzzConfig& fc = {},
                                 const Bounds& b = {}) {
  std::mt19937_64 rng(seed);
  FuzzReport report;
  for (int i = 0; i < n; ++i) {
    std::string text = fuzz_program_text(rng, fc);
    Program p = parse_program(text);
    ++report.programs;
    audit_program(p, text, DetectorConfig{MutexMode::Plain, true}, b, report);
    audit_program(p, text, DetectorConfig{MutexMode::Plain, false}, b, report);
  }
  return report;
}

inline std::string fuzz_summary(const FuzzReport& r) {
  std::ostringstream os;
  os << "programs: " << r.programs << "\n";
  os << "eliminated directions audited: " << r.directions << "\n";
  os << "by rule:";
  for (const auto& [rule, count] : r.eliminated_by_rule)
    os << " " << rule_label(rule) << "=" << count;
  os << "\n";
  os << "counterexamples: " << r.counterexamples.size() << "\n";
  for (const FuzzCounterexample& cx : r.counterexamples) {
    os << "--- " << cx.direction << " (" << rule_label(cx.rule)
       << (cx.round_robin ? ", round-robin" : ", no round-robin") << ")\n";
    os << cx.program;
  }
  return os.str();
}

}  // namespace idaracer
