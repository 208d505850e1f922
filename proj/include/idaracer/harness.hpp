#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "idaracer/detector.hpp"
#include "idaracer/oracle.hpp"
#include "idaracer/parser.hpp"
#include "idaracer/validate.hpp"

// Corpus runner: detector verdicts for every program in a directory, checked
// against the bounded interpreter. Potentially-racy pairs are confirmed (or
// not) by an overlap witness; every eliminated direction is audited against
// occurs-in-between — an eliminated direction with a witness is a soundness
// violation and the one result this project treats as fatal.

namespace idaracer {

struct CorpusResult {
  std::string name;
  int conflicting = 0;
  int potential = 0;   // pairs the detector could not eliminate
  int true_races = 0;  // potential pairs with an overlap witness in bounds
  double elim_pct = 0.0;
  double precision_pct = 100.0;
  bool precision_lower_bound = false;  // truncated exploration undercounts
  long long detector_millis = 0;
  long long oracle_millis = 0;
  bool bounds_hit = false;
  std::vector<RaceVerdict> verdicts;
  std::vector<std::string> violations;  // eliminated directions with witnesses
};

inline double elim_pct(int conflicting, int potential) {
  if (conflicting == 0) return 0.0;
  return 100.0 * (conflicting - potential) / conflicting;
}

inline double precision_pct(int potential, int true_races) {
  if (potential == 0) return 100.0;
  return 100.0 * true_races / potential;
}

namespace detail {

inline std::string direction_string(const Program& p, const StmtId& s1,
                                    const StmtId& s2, int rule) {
  return p.stmt_string(s1) + " -> " + p.stmt_string(s2) + " eliminated by " +
         rule_label(rule) + " but a witness exists";
}

}  // namespace detail

// The audit runs the interpreter as-is, which models plain locks only;
// priority-inheritance and ceiling verdicts describe a different runtime, so
// eliminated directions are only cross-checked in plain mode.
inline CorpusResult run_program(const Program& p, std::string name,
                                const DetectorConfig& cfg = {},
                                const Bounds& b = {}) {
  using clock = std::chrono::steady_clock;
  CorpusResult r;
  r.name = std::move(name);

  auto t0 = clock::now();
  r.verdicts = detect_races(p, cfg);
  auto t1 = clock::now();
  r.detector_millis =
      std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();

  r.conflicting = static_cast<int>(r.verdicts.size());
  for (const RaceVerdict& v : r.verdicts)
    if (!v.non_racy) ++r.potential;

  SemOptions opt;
  opt.tshare = cfg.round_robin;
  opt.bounds = b;

  auto t2 = clock::now();
  for (RaceVerdict& v : r.verdicts) {
    if (!v.non_racy) {
      MhpOutcome m = mhp_ex(p, v.pair.s1, v.pair.s2, opt);
      // loop and firing caps define the bounded model; only a partial graph
      // (state or step cap exceeded) makes the "no witness" answer incomplete
      r.bounds_hit = r.bounds_hit || m.truncated;
      if (m.value) {
        ++r.true_races;
        v.oracle_witness = m.witness;
      }
    }
    if (cfg.mutex_mode == MutexMode::Plain) {
      if (v.fwd.eliminated()) {
        OibOutcome o = occurs_in_between_ex(p, v.pair.s1, v.pair.s2, opt);
        r.bounds_hit = r.bounds_hit || o.truncated;
        if (o.witness)
          r.violations.push_back(
              detail::direction_string(p, v.pair.s1, v.pair.s2, v.fwd.rule));
      }
      if (v.rev.eliminated()) {
        OibOutcome o = occurs_in_between_ex(p, v.pair.s2, v.pair.s1, opt);
        r.bounds_hit = r.bounds_hit || o.truncated;
        if (o.witness)
          r.violations.push_back(
              detail::direction_string(p, v.pair.s2, v.pair.s1, v.rev.rule));
      }
    }
  }
  auto t3 = clock::now();
  r.oracle_millis =
      std::chrono::duration_cast<std::chrono::milliseconds>(t3 - t2).count();

  r.elim_pct = elim_pct(r.conflicting, r.potential);
  r.precision_pct = precision_pct(r.potential, r.true_races);
  r.precision_lower_bound = r.bounds_hit && r.potential > 0;
  return r;
}

inline std::vector<std::string> corpus_files(const std::string& dir) {
  std::vector<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".ida")
      names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

inline std::vector<CorpusResult> run_corpus(const std::string& dir,
                                            const DetectorConfig& cfg = {},
                                            const Bounds& b = {}) {
  std::vector<std::string> names = corpus_files(dir);
  std::vector<std::future<CorpusResult>> jobs;
  for (const std::string& name : names)
    jobs.push_back(std::async(std::launch::async, [&, name] {
      std::ifstream in(dir + "/" + name);
      std::ostringstream ss;
      ss << in.rdbuf();
      Program p = parse_program(ss.str());
      if (!validate(p).empty())
        throw std::runtime_error(name + ": invalid program");
      return run_program(p, name, cfg, b);
    }));
  std::vector<CorpusResult> out;
  out.reserve(jobs.size());
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

inline std::string format_pct(double v, bool lower_bound = false) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  if (lower_bound) os << "*";
  return os.str();
}

inline std::string summary_markdown(const std::vector<CorpusResult>& rs) {
  std::ostringstream os;
  os << "| Program | Conf. acc. | Potential | True races | %Elim. | %Prec. | "
        "Detector ms | Oracle ms |\n";
  os << "|---|---:|---:|---:|---:|---:|---:|---:|\n";
  for (const CorpusResult& r : rs) {
    os << "| " << r.name << " | " << r.conflicting << " | " << r.potential
       << " | " << r.true_races << " | " << format_pct(r.elim_pct) << " | "
       << format_pct(r.precision_pct, r.precision_lower_bound) << " | "
       << r.detector_millis << " | " << r.oracle_millis << " |\n";
  }
  int viol = 0;
  for (const CorpusResult& r : rs) viol += static_cast<int>(r.violations.size());
  os << "\nSoundness violations: " << viol << "\n";
  if (viol > 0)
    for (const CorpusResult& r : rs)
      for (const std::string& v : r.violations) os << "  " << r.name << ": " << v << "\n";
  return os.str();
}

inline std::string summary_csv(const std::vector<CorpusResult>& rs) {
  std::ostringstream os;
  os << "program,conflicting,potential,trueRaces,elimPct,precisionPct,"
        "detectorMillis,oracleMillis,boundsHit\n";
  for (const CorpusResult& r : rs) {
    os << r.name << "," << r.conflicting << "," << r.potential << ","
       << r.true_races << "," << format_pct(r.elim_pct) << ","
       << format_pct(r.precision_pct) << "," << r.detector_millis << ","
       << r.oracle_millis << "," << (r.bounds_hit ? 1 : 0) << "\n";
  }
  return os.str();
}

}  // namespace idaracer
