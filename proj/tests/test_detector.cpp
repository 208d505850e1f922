#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "idaracer/detector.hpp"
#include "idaracer/parser.hpp"
#include "idaracer/validate.hpp"

using namespace idaracer;

namespace {

Program parse_ok(const std::string& src) {
  Program p = parse_program(src);
  REQUIRE(validate(p).empty());
  return p;
}

Program load_corpus(const std::string& name) {
  std::ifstream in(std::string(IDARACER_CORPUS_DIR) + "/" + name);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_ok(ss.str());
}

StmtId stmt(const Program& p, const std::string& where) {
  const Instruction* in = p.resolve(where);
  REQUIRE(in != nullptr);
  return in->id;
}

std::string pair_str(const Program& p, const ConflictPair& c) {
  auto loc = [&](const StmtId& s) {
    return p.functions[static_cast<size_t>(s.func)].name + ":" + std::to_string(s.line);
  };
  return c.variable + "(" + loc(c.s1) + "," + loc(c.s2) + ")";
}

}  // namespace

TEST_CASE("conflicting pairs on the producer-consumer program") {
  Program p = load_corpus("prodcons.ida");
  std::vector<ConflictPair> pairs = conflicting_pairs(p);

  std::vector<std::string> got;
  for (const ConflictPair& c : pairs) got.push_back(pair_str(p, c));
  std::vector<std::string> want = {
      "count(main:2,prod:13)", "count(main:2,cons:23)", "count(prod:13,cons:23)",
      "item(main:1,prod:12)",  "item(main:1,cons:21)",  "item(prod:12,cons:21)",
  };
  CHECK(got == want);

  SECTION("access kinds record the strongest access per statement") {
    REQUIRE(pairs.size() == 6);
    CHECK(pairs[2].kind1 == Access::Write);  // count := count + 1 both reads and writes
    CHECK(pairs[2].kind2 == Access::Write);
    CHECK(pairs[4].kind1 == Access::Write);  // item := 0
    CHECK(pairs[4].kind2 == Access::Read);   // temp := item
  }

  SECTION("handle variables are not data") {
    for (const ConflictPair& c : pairs) {
      CHECK(c.variable != "t1");
      CHECK(c.variable != "t2");
    }
  }
}

TEST_CASE("conflicting pairs need a write and concurrent instances") {
  SECTION("two readers do not conflict") {
    Program p = parse_ok(
        "main { x := 1;\n"
        "  create(a, 1, t);\n"
        "  create(b, 1, u);\n"
        "  start; }\n"
        "task a { y := x; }\n"
        "task b { z := x; }\n");
    std::vector<std::string> got;
    for (const ConflictPair& c : conflicting_pairs(p)) got.push_back(pair_str(p, c));
    CHECK(got == std::vector<std::string>{"x(main:1,a:5)", "x(main:1,b:6)"});
  }

  SECTION("accesses inside one single-instance task never pair up") {
    Program p = parse_ok(
        "main { create(a, 1, t);\n"
        "  start; }\n"
        "task a { g := 1;\n"
        "  g := 2; }\n");
    CHECK(conflicting_pairs(p).empty());
  }

  SECTION("a doubly created task conflicts with itself") {
    Program p = parse_ok(
        "main { create(w, 1, t);\n"
        "  create(w, 1, u);\n"
        "  start; }\n"
        "task w { g := g + 1; }\n");
    std::vector<ConflictPair> pairs = conflicting_pairs(p);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].variable == "g");
    CHECK(pairs[0].s1 == stmt(p, "w:4"));
    CHECK(pairs[0].s2 == stmt(p, "w:4"));
  }

  SECTION("an uncreated task contributes no accesses") {
    Program p = parse_ok(
        "main { g := 1;\n"
        "  start; }\n"
        "task w { g := 2; }\n");
    CHECK(conflicting_pairs(p).empty());
  }

  SECTION("a handle used as data becomes an ordinary variable") {
    Program p = parse_ok(
        "main { create(a, 1, t);\n"
        "  t := 0;\n"
        "  start; }\n"
        "task a { u := t; }\n");
    std::vector<std::string> got;
    for (const ConflictPair& c : conflicting_pairs(p)) got.push_back(pair_str(p, c));
    CHECK(got == std::vector<std::string>{"t(main:2,a:4)"});
  }
}

TEST_CASE("occurs-in-between elimination on the producer-consumer program") {
  Program p = load_corpus("prodcons.ida");
  AnalysisFacts facts = compute_facts(p);

  SECTION("the suspension block shields the producer's writes") {
    CHECK(check_noib(p, stmt(p, "prod:13"), stmt(p, "cons:23"), facts).rule == 1);
    CHECK(check_noib(p, stmt(p, "prod:12"), stmt(p, "cons:21"), facts).rule == 1);
  }

  SECTION("the raised priority shields the consumer's write but not its read") {
    CHECK(check_noib(p, stmt(p, "cons:23"), stmt(p, "prod:13"), facts).rule == 2);
    CHECK(check_noib(p, stmt(p, "cons:21"), stmt(p, "prod:12"), facts).rule == 0);
  }

  SECTION("main is shielded both ways") {
    CHECK(check_noib(p, stmt(p, "main:2"), stmt(p, "prod:13"), facts).rule == 5);
    CHECK(check_noib(p, stmt(p, "prod:13"), stmt(p, "main:2"), facts).rule == 5);
  }
}

TEST_CASE("race verdicts on the producer-consumer program") {
  Program p = load_corpus("prodcons.ida");
  std::vector<RaceVerdict> verdicts = detect_races(p);
  REQUIRE(verdicts.size() == 6);

  std::vector<std::string> got;
  for (const RaceVerdict& v : verdicts)
    got.push_back(pair_str(p, v.pair) + " " + rule_label(v.fwd.rule) + "/" +
                  rule_label(v.rev.rule) + (v.non_racy ? "" : " RACY"));
  std::vector<std::string> want = {
      "count(main:2,prod:13) C5/C5",
      "count(main:2,cons:23) C5/C5",
      "count(prod:13,cons:23) C1/C2",
      "item(main:1,prod:12) C5/C5",
      "item(main:1,cons:21) C5/C5",
      "item(prod:12,cons:21) C1/- RACY",
  };
  CHECK(got == want);
}

TEST_CASE("rule C4: a shared real lock eliminates both directions") {
  Program p = parse_ok(
      "main { create(a, 2, t);\n"
      "  create(b, 1, u);\n"
      "  start; }\n"
      "task a { lock(l);\n"
      "  g := 1;\n"
      "  unlock(l); }\n"
      "task b { lock(l);\n"
      "  g := 2;\n"
      "  unlock(l); }\n");
  std::vector<RaceVerdict> verdicts = detect_races(p);
  REQUIRE(verdicts.size() == 1);
  CHECK(verdicts[0].non_racy);
  CHECK(rule_label(verdicts[0].fwd.rule) == "C4");
  CHECK(rule_label(verdicts[0].rev.rule) == "C4");

  SECTION("different locks do not") {
    Program q = parse_ok(
        "main { create(a, 2, t);\n"
        "  create(b, 1, u);\n"
        "  start; }\n"
        "task a { lock(l);\n"
        "  g := 1;\n"
        "  unlock(l); }\n"
        "task b { lock(k);\n"
        "  g := 2;\n"
        "  unlock(k); }\n");
    std::vector<RaceVerdict> vq = detect_races(q);
    REQUIRE(vq.size() == 1);
    // the higher-priority writer still shields its own side
    CHECK(rule_label(vq[0].fwd.rule) == "C2");
    CHECK(rule_label(vq[0].rev.rule) == "-");
    CHECK_FALSE(vq[0].non_racy);
  }
}

TEST_CASE("rule C6: suspending the scheduler shields against tasks but not handlers") {
  SECTION("between two tasks") {
    Program p = parse_ok(
        "main { create(a, 1, t);\n"
        "  create(b, 2, u);\n"
        "  start; }\n"
        "task a { suspendsched;\n"
        "  g := 1;\n"
        "  resumesched; }\n"
        "task b { g := 2; }\n");
    std::vector<RaceVerdict> verdicts = detect_races(p);
    REQUIRE(verdicts.size() == 1);
    CHECK(rule_label(verdicts[0].fwd.rule) == "C6");
    CHECK(rule_label(verdicts[0].rev.rule) == "C2");
    CHECK(verdicts[0].non_racy);
  }

  SECTION("an interrupt handler ignores the scheduler flag") {
    Program p = parse_ok(
        "main { create(a, 1, t);\n"
        "  start; }\n"
        "task a { suspendsched;\n"
        "  g := 1;\n"
        "  resumesched; }\n"
        "isr h { g := 2; }\n");
    std::vector<RaceVerdict> verdicts = detect_races(p);
    REQUIRE(verdicts.size() == 1);
    CHECK(rule_label(verdicts[0].fwd.rule) == "-");
    CHECK_FALSE(verdicts[0].non_racy);
  }

  SECTION("disabling interrupts shields against handlers too") {
    Program p = parse_ok(
        "main { create(a, 1, t);\n"
        "  start; }\n"
        "task a { disableint;\n"
        "  g := 1;\n"
        "  enableint; }\n"
        "isr h { g := 2; }\n");
    std::vector<RaceVerdict> verdicts = detect_races(p);
    REQUIRE(verdicts.size() == 1);
    CHECK(rule_label(verdicts[0].fwd.rule) == "C5");
    // nothing outprioritizes a running handler, so the reverse holds as well
    CHECK(rule_label(verdicts[0].rev.rule) == "C2");
    CHECK(verdicts[0].non_racy);
  }
}

TEST_CASE("rule C3: flag handshakes") {
  // the checker must strictly outprioritize the setter's block: then the
  // checker never yields inside its guarded block, and while the setter is
  // inside its block the flag reads 1 so the checker cannot enter at all
  const std::string low_setter_high_checker =
      "main { create(s, 1, t);\n"
      "  create(c, 2, u);\n"
      "  start; }\n"
      "task s { f := 1;\n"
      "  g := 1;\n"
      "  f := 0; }\n"
      "task c { block;\n"
      "  if (f == 0) {\n"
      "    g := 2;\n"
      "  } }\n";

  SECTION("a low setter is shielded from a high checker") {
    Program p = parse_ok(low_setter_high_checker);
    AnalysisFacts facts = compute_facts(p);
    NoibVerdict v = check_noib(p, stmt(p, "s:5"), stmt(p, "c:9"), facts);
    CHECK(rule_label(v.rule) == "C3");
  }

  SECTION("an equal-priority checker can straddle the flag via time slicing") {
    std::string src = low_setter_high_checker;
    src.replace(src.find("create(c, 2"), 11, "create(c, 1");
    Program p = parse_ok(src);
    AnalysisFacts facts = compute_facts(p);
    CHECK(check_noib(p, stmt(p, "s:5"), stmt(p, "c:9"), facts).rule == 0);
  }

  SECTION("a high foreign resetter defeats the flag") {
    Program p = parse_ok(
        "main { create(s, 1, t);\n"
        "  create(c, 3, u);\n"
        "  create(r, 2, w);\n"
        "  start; }\n"
        "task s { f := 1;\n"
        "  g := 1;\n"
        "  f := 0; }\n"
        "task c { block;\n"
        "  if (f == 0) {\n"
        "    g := 2;\n"
        "  } }\n"
        "task r { block;\n"
        "  f := 0; }\n");
    AnalysisFacts facts = compute_facts(p);
    CHECK(check_noib(p, stmt(p, "s:6"), stmt(p, "c:10"), facts).rule == 0);
  }

  SECTION("a suspended scheduler shields the setter from task resetters") {
    // the task resetter outprioritizes the setter, so only the scheduler
    // suspension branch can justify the flag here; the checker is a handler,
    // which always completes before any task gets to run again
    Program p = parse_ok(
        "main { create(s, 1, t);\n"
        "  create(r, 3, w);\n"
        "  start; }\n"
        "task s { suspendsched;\n"
        "  f := 1;\n"
        "  g := 1;\n"
        "  f := 0;\n"
        "  resumesched; }\n"
        "isr c { if (f == 0) {\n"
        "    g := 2;\n"
        "  } }\n"
        "task r { block;\n"
        "  f := 0; }\n");
    AnalysisFacts facts = compute_facts(p);
    CHECK(rule_label(check_noib(p, stmt(p, "s:6"), stmt(p, "c:10"), facts).rule) == "C3");

    SECTION("but not from handler resetters") {
      Program q = parse_ok(
          "main { create(s, 1, t);\n"
          "  start; }\n"
          "task s { suspendsched;\n"
          "  f := 1;\n"
          "  g := 1;\n"
          "  f := 0;\n"
          "  resumesched; }\n"
          "isr c { if (f == 0) {\n"
          "    g := 2;\n"
          "  } }\n"
          "isr r { f := 0; }\n");
      AnalysisFacts fq = compute_facts(q);
      CHECK(check_noib(q, stmt(q, "s:5"), stmt(q, "c:9"), fq).rule == 0);
    }
  }
}

TEST_CASE("rule C1 declines when the suspension block is threatened") {
  SECTION("a resumer that can outprioritize the block") {
    Program p = parse_ok(
        "main { create(a, 1, t);\n"
        "  create(b, 1, u);\n"
        "  create(r, 2, w);\n"
        "  start; }\n"
        "task a { suspend(u);\n"
        "  g := 1;\n"
        "  resume(u); }\n"
        "task b { g := 2; }\n"
        "task r { block;\n"
        "  resume(u); }\n");
    AnalysisFacts facts = compute_facts(p);
    CHECK(check_noib(p, stmt(p, "a:6"), stmt(p, "b:8"), facts).rule == 0);
  }

  SECTION("a low-priority foreign resumer is harmless") {
    Program p = parse_ok(
        "main { create(a, 2, t);\n"
        "  create(b, 2, u);\n"
        "  create(r, 1, w);\n"
        "  start; }\n"
        "task a { suspend(u);\n"
        "  g := 1;\n"
        "  resume(u); }\n"
        "task b { g := 2; }\n"
        "task r { block;\n"
        "  resume(u); }\n");
    AnalysisFacts facts = compute_facts(p);
    CHECK(rule_label(check_noib(p, stmt(p, "a:6"), stmt(p, "b:8"), facts).rule) == "C1");
  }

  SECTION("a block inside the suspension block gives resumers an opening") {
    Program p = parse_ok(
        "main { create(a, 2, t);\n"
        "  create(b, 2, u);\n"
        "  create(r, 1, w);\n"
        "  start; }\n"
        "task a { suspend(u);\n"
        "  block;\n"
        "  g := 1;\n"
        "  resume(u); }\n"
        "task b { g := 2; }\n"
        "task r { block;\n"
        "  resume(u); }\n");
    AnalysisFacts facts = compute_facts(p);
    CHECK(check_noib(p, stmt(p, "a:7"), stmt(p, "b:9"), facts).rule == 0);
  }
}

TEST_CASE("disabling round-robin relaxes the priority comparisons") {
  SECTION("a doubly created writer races only under time slicing") {
    Program p = parse_ok(
        "main { create(w, 1, t);\n"
        "  create(w, 1, u);\n"
        "  start; }\n"
        "task w { g := g + 1; }\n");
    std::vector<RaceVerdict> rr = detect_races(p, DetectorConfig{MutexMode::Plain, true});
    REQUIRE(rr.size() == 1);
    CHECK_FALSE(rr[0].non_racy);

    std::vector<RaceVerdict> norr =
        detect_races(p, DetectorConfig{MutexMode::Plain, false});
    REQUIRE(norr.size() == 1);
    CHECK(norr[0].non_racy);
    CHECK(rule_label(norr[0].fwd.rule) == "C2");
    CHECK(rule_label(norr[0].rev.rule) == "C2");
  }

  SECTION("eliminations are monotone: nothing un-eliminates") {
    Program p = load_corpus("prodcons.ida");
    std::vector<RaceVerdict> rr = detect_races(p, DetectorConfig{MutexMode::Plain, true});
    std::vector<RaceVerdict> norr =
        detect_races(p, DetectorConfig{MutexMode::Plain, false});
    REQUIRE(rr.size() == norr.size());
    for (size_t i = 0; i < rr.size(); ++i) {
      if (rr[i].fwd.eliminated()) CHECK(norr[i].fwd.eliminated());
      if (rr[i].rev.eliminated()) CHECK(norr[i].rev.eliminated());
      if (rr[i].non_racy) CHECK(norr[i].non_racy);
    }
  }
}

TEST_CASE("mutex modes change verdicts through the priority intervals") {
  // the classic pattern: a low task still touches the shared data after
  // releasing the lock, so plain mutexes leave a hole but a ceiling closes it
  Program p = parse_ok(
      "mutex m1;\n"
      "main { create(lo, 1, t);\n"
      "  create(hi, 2, u);\n"
      "  start; }\n"
      "task lo { lock(m1);\n"
      "  g := 1;\n"
      "  unlock(m1);\n"
      "  g := 2; }\n"
      "task hi { block;\n"
      "  lock(m1);\n"
      "  g := 3;\n"
      "  unlock(m1); }\n");

  std::vector<RaceVerdict> plain = detect_races(p, DetectorConfig{MutexMode::Plain, false});
  bool any_racy = false;
  for (const RaceVerdict& v : plain) any_racy = any_racy || !v.non_racy;
  CHECK(any_racy);

  std::vector<RaceVerdict> ceil = detect_races(p, DetectorConfig{MutexMode::Ceiling, false});
  for (const RaceVerdict& v : ceil) {
    INFO(pair_str(p, v.pair));
    CHECK(v.non_racy);
  }
}
