#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace heatfuzz {

using Bytes = std::vector<uint8_t>;

// ---------------------------------------------------------------------------
// Guard expressions
//
// Guards read pure functions of the input bytes: byte[i] (unsigned byte),
// i8[i]/i16le[i]/i32le[i] (signed little-endian reads at offset i), and
// integer literals. Reads past the end of the input see zero bytes, so
// evaluation is total for any input length.
// ---------------------------------------------------------------------------

enum class CmpOp { Lt, Le, Eq, Ne, Ge, Gt };

enum class OperandKind { ByteAt, I8At, I16leAt, I32leAt, Literal };

struct GuardOperand {
  OperandKind kind = OperandKind::Literal;
  int64_t value = 0;  // offset for the *At kinds, literal value otherwise
};

struct GuardExpr;
using GuardPtr = std::shared_ptr<const GuardExpr>;

struct GuardExpr {
  enum class Kind { Cmp, And, Or, Not };

  Kind kind = Kind::Cmp;
  GuardOperand lhs, rhs;  // Cmp
  CmpOp op = CmpOp::Eq;   // Cmp
  GuardPtr a, b;          // And/Or both, Not uses a only

  static GuardPtr make_cmp(GuardOperand lhs, CmpOp op, GuardOperand rhs);
  static GuardPtr make_and(GuardPtr a, GuardPtr b);
  static GuardPtr make_or(GuardPtr a, GuardPtr b);
  static GuardPtr make_not(GuardPtr a);
};

int64_t read_operand(const GuardOperand& operand, const Bytes& input);
bool eval_guard(const GuardExpr& guard, const Bytes& input);

// ---------------------------------------------------------------------------
// Programs
// ---------------------------------------------------------------------------

struct BlockEdge {
  GuardPtr guard;  // null means `else`
  int dest = -1;   // block index
};

struct BlockDef {
  std::string id;
  bool is_crash = false;
  std::vector<BlockEdge> edges;  // declaration order; at most one else, last
};

class TargetProgram {
 public:
  TargetProgram() = default;
  TargetProgram(std::vector<BlockDef> blocks, int init_index,
                GuardPtr initial_constraint = nullptr);

  const std::vector<BlockDef>& blocks() const { return blocks_; }
  const BlockDef& block(int index) const { return blocks_[static_cast<size_t>(index)]; }
  int init_index() const { return init_index_; }
  const std::string& init_id() const { return blocks_[static_cast<size_t>(init_index_)].id; }
  int block_count() const { return static_cast<int>(blocks_.size()); }

  // -1 when the id is unknown.
  int index_of(const std::string& id) const;
  const std::string& id_of(int index) const { return blocks_[static_cast<size_t>(index)].id; }

  // Number of input bytes the guards can inspect (highest offset touched + width).
  size_t input_len_max() const { return input_len_max_; }

  const GuardPtr& initial_constraint() const { return initial_constraint_; }
  bool satisfies_initial_constraint(const Bytes& input) const;

  int crash_block_count() const;

 private:
  std::vector<BlockDef> blocks_;
  std::unordered_map<std::string, int> index_;
  int init_index_ = 0;
  size_t input_len_max_ = 0;
  GuardPtr initial_constraint_;
};

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

enum class Termination { NoMatchingGuard, CrashBlock, StepLimit };

struct ExecutionTrace {
  std::vector<int> block_seq;                // starts at init
  std::vector<std::pair<int, int>> edge_seq; // edge_seq[i] = (block_seq[i], block_seq[i+1])
  bool crashed = false;
  Termination termination = Termination::NoMatchingGuard;

  std::vector<std::string> block_ids(const TargetProgram& program) const;
};

inline constexpr int kDefaultStepLimit = 4096;

// Deterministic: at each block the first guard (in declaration order) that
// evaluates true is taken. Total for any input.
ExecutionTrace execute(const TargetProgram& program, const Bytes& input,
                       int step_limit = kDefaultStepLimit);

// ---------------------------------------------------------------------------
// Static control-flow graph
// ---------------------------------------------------------------------------

struct Cfg {
  int block_count = 0;
  std::vector<std::string> ids;                 // by block index
  std::vector<std::vector<int>> successors;     // deduplicated, sorted
  std::vector<std::vector<int>> pre_dominants;  // direct predecessors, sorted

  bool has_edge(int from, int to) const;
  size_t edge_count() const;

  // Completion hook for transitions observed at run time but absent from the
  // static edge set. No-op when the edge already exists.
  void add_dynamic_edge(int from, int to);
};

Cfg build_cfg(const TargetProgram& program);

// ---------------------------------------------------------------------------
// Parsing / serialization
// ---------------------------------------------------------------------------

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& message);
  int line() const { return line_; }

 private:
  int line_;
};

// Line-oriented DSL:
//   program  := "init" ID NL block+
//   block    := "block" ID ["crash"] "{" NL edge* "}" NL
//   edge     := ("if" guard | "else") "->" ID NL
// Guards are or/and/not combinations of comparisons over byte[i], i8[i],
// i16le[i], i32le[i] and signed integer literals. '#' starts a comment.
TargetProgram parse_target(const std::string& text);

std::string serialize_target(const TargetProgram& program);

std::string serialize_guard(const GuardExpr& guard);

// Bundled demo programs: "motivating", "deep-nest", "figure3".
std::map<std::string, TargetProgram> demo_targets();

// Source text of a bundled demo program (same content as the bundled .tgt files).
const std::string& demo_target_source(const std::string& name);

}  // namespace heatfuzz
