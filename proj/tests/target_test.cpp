#include <algorithm>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "heatfuzz/rng.hpp"
#include "heatfuzz/target.hpp"

using namespace heatfuzz;

namespace {

Bytes make_input(int32_t a, int32_t b, int32_t c, const std::string& buf) {
  Bytes out(12 + buf.size(), 0);
  for (int i = 0; i < 4; ++i) {
    out[static_cast<size_t>(i)] = static_cast<uint8_t>(static_cast<uint32_t>(a) >> (8 * i));
    out[static_cast<size_t>(4 + i)] = static_cast<uint8_t>(static_cast<uint32_t>(b) >> (8 * i));
    out[static_cast<size_t>(8 + i)] = static_cast<uint8_t>(static_cast<uint32_t>(c) >> (8 * i));
  }
  for (size_t i = 0; i < buf.size(); ++i) out[12 + i] = static_cast<uint8_t>(buf[i]);
  return out;
}

Bytes random_bytes(Rng& rng, size_t len) {
  Bytes out(len);
  for (auto& b : out) b = static_cast<uint8_t>(rng.below(256));
  return out;
}

std::vector<std::string> trace_ids(const TargetProgram& program, const Bytes& input,
                                   int step_limit = kDefaultStepLimit) {
  return execute(program, input, step_limit).block_ids(program);
}

}  // namespace

TEST_SUITE_BEGIN("target");

TEST_CASE("guard operands read little-endian views and zero-fill past the end") {
  Bytes input = {0x01, 0x02, 0xff, 0xff};
  CHECK(read_operand({OperandKind::ByteAt, 0}, input) == 0x01);
  CHECK(read_operand({OperandKind::ByteAt, 9}, input) == 0);
  CHECK(read_operand({OperandKind::I8At, 2}, input) == -1);
  CHECK(read_operand({OperandKind::I16leAt, 0}, input) == 0x0201);
  CHECK(read_operand({OperandKind::I16leAt, 2}, input) == -1);
  CHECK(read_operand({OperandKind::I16leAt, 3}, input) == 0x00ff);  // second byte missing
  CHECK(read_operand({OperandKind::I32leAt, 0}, input) == static_cast<int32_t>(0xffff0201));
  CHECK(read_operand({OperandKind::I32leAt, 4}, input) == 0);
  CHECK(read_operand({OperandKind::Literal, -42}, input) == -42);
}

TEST_CASE("parse_target builds the motivating program") {
  TargetProgram program = parse_target(demo_target_source("motivating"));
  CHECK(program.block_count() == 9);
  CHECK(program.init_id() == "L1");
  CHECK(program.crash_block_count() == 1);
  CHECK(program.index_of("L8") >= 0);
  CHECK(program.block(program.index_of("L8")).is_crash);
  CHECK(program.input_len_max() == 15);
}

TEST_CASE("parse_target accepts a minimal one-block program") {
  TargetProgram program = parse_target("init A\nblock A {\n}\n");
  CHECK(program.block_count() == 1);
  CHECK(program.block(0).edges.empty());
}

TEST_CASE("parse_target rejects unknown destinations") {
  std::string source = "init A\nblock A {\n  else -> Z\n}\n";
  CHECK_THROWS_WITH_AS(parse_target(source), doctest::Contains("unknown destination"),
                       ParseError);
}

TEST_CASE("parse_target rejects duplicate block ids and misplaced else") {
  CHECK_THROWS_WITH_AS(parse_target("init A\nblock A {\n}\nblock A {\n}\n"),
                       doctest::Contains("duplicate block id"), ParseError);
  std::string else_first =
      "init A\nblock A {\n  else -> B\n  if byte[0] == 1 -> B\n}\nblock B {\n}\n";
  CHECK_THROWS_WITH_AS(parse_target(else_first), doctest::Contains("after 'else'"), ParseError);
}

TEST_CASE("parse errors carry line numbers") {
  try {
    parse_target("init A\nblock A {\n  if byte[0] -> A\n}\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("execute reaches the crash on the flag-and-magic input") {
  TargetProgram program = parse_target(demo_target_source("motivating"));
  Bytes input = make_input(200, -1, -10, "XXX");
  ExecutionTrace trace = execute(program, input);
  CHECK(trace.crashed);
  CHECK(trace.termination == Termination::CrashBlock);
  CHECK(trace.block_ids(program) ==
        std::vector<std::string>{"L1", "L2", "L3", "L4", "L5", "L6", "L7", "L8"});
}

TEST_CASE("execute takes the short path when the first condition fails") {
  TargetProgram program = parse_target(demo_target_source("motivating"));
  ExecutionTrace trace = execute(program, make_input(0, 0, 0, ""));
  CHECK_FALSE(trace.crashed);
  CHECK(trace.block_ids(program) == std::vector<std::string>{"L1", "L2", "L9"});
}

TEST_CASE("flag path without the magic bytes stops at the flag check") {
  TargetProgram program = parse_target(demo_target_source("motivating"));
  ExecutionTrace trace = execute(program, make_input(200, -1, -10, "YYY"));
  CHECK_FALSE(trace.crashed);
  CHECK(trace.block_ids(program) ==
        std::vector<std::string>{"L1", "L2", "L3", "L4", "L5", "L6", "L9"});
}

TEST_CASE("step_limit caps the number of transitions") {
  TargetProgram program = parse_target(demo_target_source("motivating"));
  ExecutionTrace trace = execute(program, make_input(200, -1, -10, "XXX"), 1);
  CHECK(trace.edge_seq.size() <= 1);
  CHECK(trace.termination == Termination::StepLimit);
}

TEST_CASE("execute escapes cycles via the step limit") {
  TargetProgram program = parse_target("init A\nblock A {\n  else -> B\n}\nblock B {\n  else -> A\n}\n");
  ExecutionTrace trace = execute(program, {}, 10);
  CHECK(trace.termination == Termination::StepLimit);
  CHECK(trace.edge_seq.size() == 10);
}

TEST_CASE("execute is deterministic") {
  TargetProgram program = parse_target(demo_target_source("motivating"));
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    Bytes input = random_bytes(rng, rng.below(32));
    ExecutionTrace a = execute(program, input);
    ExecutionTrace b = execute(program, input);
    CHECK(a.block_seq == b.block_seq);
    CHECK(a.edge_seq == b.edge_seq);
    CHECK(a.crashed == b.crashed);
  }
}

TEST_CASE("guard totality: random inputs of any length always execute") {
  Rng rng(21);
  for (const auto& [name, program] : demo_targets()) {
    for (int i = 0; i < 200; ++i) {
      Bytes input = random_bytes(rng, rng.below(40));
      ExecutionTrace trace = execute(program, input);
      CHECK(!trace.block_seq.empty());
      CHECK(trace.block_seq.front() == program.init_index());
    }
  }
}

TEST_CASE("permuting disjoint guards does not change traces") {
  std::string original =
      "init A\n"
      "block A {\n"
      "  if byte[0] < 10 -> B\n"
      "  if byte[0] >= 10 and byte[0] < 100 -> C\n"
      "  if byte[0] >= 100 -> D\n"
      "}\n"
      "block B {\n}\nblock C {\n}\nblock D {\n}\n";
  std::string permuted =
      "init A\n"
      "block A {\n"
      "  if byte[0] >= 100 -> D\n"
      "  if byte[0] < 10 -> B\n"
      "  if byte[0] >= 10 and byte[0] < 100 -> C\n"
      "}\n"
      "block B {\n}\nblock C {\n}\nblock D {\n}\n";
  TargetProgram a = parse_target(original);
  TargetProgram b = parse_target(permuted);
  Rng rng(3);
  for (int i = 0; i < 300; ++i) {
    Bytes input = random_bytes(rng, 1 + rng.below(4));
    CHECK(trace_ids(a, input) == trace_ids(b, input));
  }
}

TEST_CASE("build_cfg computes pre-dominant sets") {
  TargetProgram program = parse_target(demo_target_source("motivating"));
  Cfg cfg = build_cfg(program);
  int l8 = program.index_of("L8");
  int l7 = program.index_of("L7");
  CHECK(cfg.pre_dominants[static_cast<size_t>(l8)] == std::vector<int>{l7});
  int l6 = program.index_of("L6");
  CHECK(cfg.pre_dominants[static_cast<size_t>(l7)] == std::vector<int>{l6});
}

TEST_CASE("build_cfg on a single block yields no edges") {
  TargetProgram program = parse_target("init A\nblock A {\n}\n");
  Cfg cfg = build_cfg(program);
  CHECK(cfg.edge_count() == 0);
  CHECK(cfg.pre_dominants[0].empty());
}

TEST_CASE("build_cfg on a diamond") {
  std::string source =
      "init A\n"
      "block A {\n  if byte[0] == 0 -> B\n  else -> C\n}\n"
      "block B {\n  else -> D\n}\n"
      "block C {\n  else -> D\n}\n"
      "block D {\n}\n";
  TargetProgram program = parse_target(source);
  Cfg cfg = build_cfg(program);
  int b = program.index_of("B");
  int c = program.index_of("C");
  int d = program.index_of("D");
  CHECK(cfg.pre_dominants[static_cast<size_t>(d)] == std::vector<int>{b, c});
}

TEST_CASE("cfg soundness: every executed edge is a static edge") {
  Rng rng(11);
  for (const auto& [name, program] : demo_targets()) {
    Cfg cfg = build_cfg(program);
    for (int i = 0; i < 200; ++i) {
      Bytes input = random_bytes(rng, rng.below(32));
      ExecutionTrace trace = execute(program, input);
      for (const auto& [from, to] : trace.edge_seq) CHECK(cfg.has_edge(from, to));
    }
  }
}

TEST_CASE("add_dynamic_edge extends the edge set once") {
  TargetProgram program = parse_target("init A\nblock A {\n}\nblock B {\n}\n");
  Cfg cfg = build_cfg(program);
  CHECK_FALSE(cfg.has_edge(0, 1));
  cfg.add_dynamic_edge(0, 1);
  cfg.add_dynamic_edge(0, 1);
  CHECK(cfg.has_edge(0, 1));
  CHECK(cfg.edge_count() == 1);
  CHECK(cfg.pre_dominants[1] == std::vector<int>{0});
}

TEST_CASE("initial constraints gate inputs without affecting execution") {
  TargetProgram plain = parse_target("init A\nblock A {\n}\n");
  CHECK(plain.satisfies_initial_constraint({}));

  GuardPtr constraint = GuardExpr::make_cmp({OperandKind::ByteAt, 0}, CmpOp::Ge,
                                            {OperandKind::Literal, 10});
  TargetProgram constrained({{"A", false, {}}}, 0, constraint);
  CHECK(constrained.satisfies_initial_constraint({20}));
  CHECK_FALSE(constrained.satisfies_initial_constraint({5}));
  CHECK_FALSE(constrained.satisfies_initial_constraint({}));  // missing bytes read 0
  // execution stays total either way
  CHECK(execute(constrained, {5}).block_seq.size() == 1);
}

TEST_CASE("serializer round-trips every demo target") {
  for (const auto& [name, program] : demo_targets()) {
    std::string text = serialize_target(program);
    TargetProgram reparsed = parse_target(text);
    CHECK(serialize_target(reparsed) == text);
    CHECK(reparsed.block_count() == program.block_count());
    CHECK(reparsed.init_id() == program.init_id());
  }
}

TEST_CASE("demo_targets ships the documented programs") {
  auto targets = demo_targets();
  CHECK(targets.count("motivating") == 1);
  CHECK(targets.count("deep-nest") == 1);
  CHECK(targets.count("figure3") == 1);

  const TargetProgram& motivating = targets.at("motivating");
  CHECK_FALSE(execute(motivating, Bytes(16, 0)).crashed);
  CHECK(motivating.crash_block_count() == 1);
}

TEST_CASE("deep-nest crashes only on the six magic bytes") {
  TargetProgram program = demo_targets().at("deep-nest");
  Bytes magic = {77, 201, 13, 55, 128, 250};
  CHECK(execute(program, magic).crashed);
  Bytes off = magic;
  off[5] ^= 1;
  CHECK_FALSE(execute(program, off).crashed);
}

TEST_CASE("bundled .tgt files match the built-in sources") {
  for (const std::string name : {"motivating", "deep-nest", "figure3"}) {
    std::string file = std::string(HEATFUZZ_SOURCE_DIR) + "/targets/" +
                       (name == std::string("deep-nest") ? "deep_nest" : name) + ".tgt";
    std::ifstream in(file);
    REQUIRE_MESSAGE(in.good(), file);
    std::stringstream buffer;
    buffer << in.rdbuf();
    TargetProgram from_file = parse_target(buffer.str());
    TargetProgram builtin = parse_target(demo_target_source(name));
    CHECK(serialize_target(from_file) == serialize_target(builtin));
  }
}

TEST_SUITE_END();
