#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>
#include <sstream>

#include "idaracer/parser.hpp"
#include "idaracer/printer.hpp"
#include "idaracer/validate.hpp"

using namespace idaracer;

static std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

static Program load_corpus(const std::string& name) {
  return parse_program(read_file(std::string(IDARACER_CORPUS_DIR) + "/" + name));
}

TEST_CASE("producer/consumer program parses to the expected shape") {
  Program p = load_corpus("prodcons.ida");

  REQUIRE(p.functions.size() == 3);
  CHECK(p.functions[0].name == "main");
  CHECK(p.functions[0].kind == FuncKind::Main);
  CHECK(p.functions[1].name == "prod");
  CHECK(p.functions[1].kind == FuncKind::Task);
  CHECK(p.functions[2].name == "cons");
  CHECK(p.main_index == 0);
  CHECK(p.num_isrs == 0);
  CHECK(p.max_task_prio == 7);

  auto stmts = statements(p);
  CHECK(stmts.size() == 17);  // 5 main + 6 prod + 6 cons

  // physical lines: main 1..5, prod 10..14, cons 20..24
  std::multiset<int> main_lines, prod_lines, cons_lines;
  for (auto& [id, cmd] : stmts) {
    if (id.func == 0) main_lines.insert(id.line);
    if (id.func == 1) prod_lines.insert(id.line);
    if (id.func == 2) cons_lines.insert(id.line);
  }
  CHECK(main_lines == std::multiset<int>{1, 2, 3, 4, 5});
  CHECK(prod_lines == std::multiset<int>{10, 10, 11, 12, 13, 14});
  CHECK(cons_lines == std::multiset<int>{20, 20, 21, 22, 23, 24});

  // the two for(;;) guard instructions share a line, disambiguated by seq
  const Instruction* loop_t = p.resolve("prod:10");
  const Instruction* loop_f = p.resolve("prod:10#1");
  REQUIRE(loop_t != nullptr);
  REQUIRE(loop_f != nullptr);
  CHECK(loop_t->cmd.op == Op::Assume);
  CHECK(loop_f->cmd.op == Op::Assume);
  CHECK(loop_t->loop_entry);
  CHECK_FALSE(loop_f->loop_entry);
  CHECK(p.stmt_string(loop_t->id) == "prod:10");
  CHECK(p.stmt_string(loop_f->id) == "prod:10#1");

  CHECK(p.resolve("prod:12")->cmd.op == Op::Assign);
  CHECK(p.resolve("cons:22")->cmd.op == Op::SetPriority);
  CHECK(p.resolve("cons:22")->cmd.priority == 2);
  CHECK(p.resolve("main:5")->cmd.op == Op::Start);
  CHECK(p.resolve("nosuch:1") == nullptr);
  CHECK(p.resolve("prod:99") == nullptr);

  // loop body instructions are marked, guards mark the iteration edge
  CHECK(p.resolve("prod:11")->in_loop);
  CHECK(p.resolve("prod:14")->in_loop);
  CHECK_FALSE(p.resolve("main:1")->in_loop);

  // handles are ordinary globals
  CHECK(p.find_var("t1") >= 0);
  CHECK(p.find_var("t2") >= 0);
  CHECK(p.find_var("item") >= 0);

  CHECK(validate(p).empty());
}

TEST_CASE("if desugars into an assume pair") {
  Program p = parse_program(
      "main {\n"
      "  if (x > 0) {\n"
      "    y := 1;\n"
      "  } else {\n"
      "    y := 2;\n"
      "  }\n"
      "  start;\n"
      "}\n"
      "task t { skip; }\n");
  const Function& f = p.functions[0];
  // assume(x>0), y:=1, assume(!(x>0)), y:=2, start
  REQUIRE(f.instrs.size() == 5);
  CHECK(f.instrs[0].cmd.op == Op::Assume);
  CHECK(f.instrs[1].cmd.op == Op::Assign);
  CHECK(f.instrs[2].cmd.op == Op::Assume);
  CHECK(f.instrs[2].cmd.expr->kind == Expr::Kind::Unary);
  CHECK(f.instrs[2].cmd.expr->uop == UnOp::Not);
  CHECK(f.instrs[3].cmd.op == Op::Assign);
  // both branch guards leave the same location, branches converge
  CHECK(f.instrs[0].from == f.instrs[2].from);
  CHECK(f.instrs[1].to == f.instrs[3].to);
  CHECK(f.instrs[0].id.line == 2);
  CHECK(f.instrs[0].id.seq == 0);
  CHECK(f.instrs[2].id.seq == 1);
}

TEST_CASE("while desugars with a back edge into the head") {
  Program p = parse_program(
      "main { start; }\n"
      "task t {\n"
      "  while (n > 0) {\n"
      "    n := n - 1;\n"
      "  }\n"
      "  done := 1;\n"
      "}\n");
  const Function& f = p.functions[1];
  REQUIRE(f.instrs.size() == 4);
  const Instruction& guard_t = f.instrs[0];
  const Instruction& guard_f = f.instrs[1];
  const Instruction& body = f.instrs[2];
  CHECK(guard_t.loop_entry);
  CHECK(guard_t.loop_index == 0);
  CHECK(body.to == guard_t.from);  // back edge
  CHECK(guard_f.from == guard_t.from);
  CHECK(body.in_loop);
  CHECK_FALSE(guard_t.in_loop);
  CHECK(f.num_loops == 1);
}

TEST_CASE("empty task body has entry == exit and no instructions") {
  Program p = parse_program("main { start; }\ntask idlehands { }\n");
  const Function& f = p.functions[1];
  CHECK(f.entry == f.exit);
  CHECK(f.instrs.empty());
  CHECK(statements(p).size() == 1);
}

TEST_CASE("cfg structural invariants hold on corpus programs") {
  for (const char* name : {"prodcons.ida"}) {
    Program p = load_corpus(name);
    for (const Function& f : p.functions) {
      // exit has no outgoing instruction
      for (const auto& in : f.instrs) CHECK(in.from != f.exit);
      // entry only receives loop back edges
      for (const auto& in : f.instrs)
        if (in.to == f.entry) CHECK(in.in_loop);
      // statement ids are unique within the program
      std::set<std::tuple<int, int, int>> seen;
      for (const auto& in : f.instrs) {
        auto key = std::make_tuple(in.id.func, in.id.line, in.id.seq);
        CHECK(seen.insert(key).second);
      }
      // every location reachable from entry
      std::vector<char> seen_loc(static_cast<size_t>(f.num_locs), 0);
      std::vector<int> work{f.entry};
      seen_loc[static_cast<size_t>(f.entry)] = 1;
      while (!work.empty()) {
        int l = work.back();
        work.pop_back();
        for (int ii : f.outgoing[static_cast<size_t>(l)]) {
          int t = f.instrs[static_cast<size_t>(ii)].to;
          if (!seen_loc[static_cast<size_t>(t)]) {
            seen_loc[static_cast<size_t>(t)] = 1;
            work.push_back(t);
          }
        }
      }
      for (char c : seen_loc) CHECK(c == 1);
    }
  }
}

TEST_CASE("isr priorities follow declaration order above maxprio") {
  Program p = parse_program(
      "maxprio 3;\n"
      "main { start; }\n"
      "isr timer { x := x + 1; }\n"
      "task t { skip; }\n"
      "isr uart { y := 1; }\n");
  CHECK(p.max_task_prio == 3);
  CHECK(p.num_isrs == 2);
  CHECK(p.functions[1].isr_priority == 4);
  CHECK(p.functions[3].isr_priority == 5);
  CHECK(p.functions[2].isr_priority == -1);
}

TEST_CASE("parse errors carry a position") {
  auto expect_error = [](const std::string& src, const std::string& needle) {
    try {
      parse_program(src);
      FAIL("expected ParseError for: " << src);
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  expect_error("main { x := ; }", "expected expression");
  expect_error("main { skip }", "expected ';'");
  expect_error("main { start; }\ntask t { skip; }\ntask t { skip; }", "duplicate function");
  expect_error("task t { skip; }", "no main function");
  expect_error("main { create(ghost, 1, h); start; }", "unknown function");
  expect_error("main { lock(a); a := 1; start; }", "both lock and variable");
  expect_error("main { x := NULL; }", "NULL");
  expect_error("main { start; } main { skip; }", "duplicate function name 'main'");
}

TEST_CASE("placement diagnostics") {
  Program p = parse_program(
      "main { create(t, 9, h); start; }\n"
      "task t { start; set_priority(NULL, 0); }\n"
      "isr i { suspend(NULL); block; x := 1; }\n");
  auto diags = validate(p);
  REQUIRE(diags.size() == 5);
  std::vector<std::string> msgs;
  for (auto& d : diags) msgs.push_back(p.stmt_string(d.stmt) + " " + d.message);
  CHECK(msgs[0].find("main:1 create priority 9") == 0);
  CHECK(msgs[1].find("start is only allowed in main") != std::string::npos);
  CHECK(msgs[2].find("set_priority 0 outside") != std::string::npos);
  CHECK(msgs[3].find("suspend is not allowed in an ISR") != std::string::npos);
  CHECK(msgs[4].find("block is not allowed in an ISR") != std::string::npos);
}

TEST_CASE("create of a non-task function is rejected") {
  Program p = parse_program(
      "main { create(h, 1, x); start; }\n"
      "isr h { y := 1; }\n"
      "task t { skip; }\n");
  auto diags = validate(p);
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].message.find("not a task function") != std::string::npos);
}

TEST_CASE("pretty-printed source reparses to the same structure") {
  for (const char* name : {"prodcons.ida"}) {
    Program p = load_corpus(name);
    Program q = parse_program(pretty_print(p));
    CHECK(same_structure(p, q));
  }

  // a program exercising every construct once
  Program p = parse_program(
      "maxprio 4;\n"
      "mutex mu;\n"
      "main {\n"
      "  n := 3; create(worker, 2, h); start;\n"
      "}\n"
      "task worker {\n"
      "  while (n > 0) {\n"
      "    if (n % 2 == 0) { evens := evens + 1; } else { odds := odds + 1; }\n"
      "    lock(mu); n := n - 1; unlock(mu);\n"
      "    set_priority(NULL, 1); suspend(NULL);\n"
      "  }\n"
      "  for (;;) { block; }\n"
      "}\n"
      "task boss {\n"
      "  resume(h); suspendsched; resumesched; disableint; enableint; skip;\n"
      "  assume(!(n == 0) && (odds >= 0 || evens / 1 - -2 < 9));\n"
      "}\n"
      "isr tick { ticks := ticks + 1; }\n");
  Program q = parse_program(pretty_print(p));
  CHECK(same_structure(p, q));
  // and printing is idempotent once canonical
  CHECK(pretty_print(p) == pretty_print(q));
}

TEST_CASE("expression evaluation") {
  Program p = parse_program("main { r := (a + 2) * 3 - b % 2; start; }\ntask t { skip; }\n");
  const Expr& e = *p.functions[0].instrs[0].cmd.expr;
  int a = p.find_var("a");
  int b = p.find_var("b");
  std::vector<long long> env(p.vars.size(), 0);
  env[static_cast<size_t>(a)] = 4;
  env[static_cast<size_t>(b)] = 7;
  CHECK(eval(e, env) == 17);

  Program q = parse_program("main { r := 1 / d; start; }\ntask t { skip; }\n");
  std::vector<long long> env2(q.vars.size(), 0);
  CHECK_THROWS_AS(eval(*q.functions[0].instrs[0].cmd.expr, env2), EvalError);
}

TEST_CASE("comments and whitespace are ignored") {
  Program p = parse_program(
      "// leading comment\n"
      "main {   // trailing\n"
      "  x := 1; // after stmt\n"
      "  start;\n"
      "}\n"
      "task t { skip; }\n");
  CHECK(p.functions[0].instrs.size() == 2);
  CHECK(p.functions[0].instrs[0].id.line == 3);
}
