#include "heatfuzz/target.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace heatfuzz {

GuardPtr GuardExpr::make_cmp(GuardOperand lhs, CmpOp op, GuardOperand rhs) {
  auto g = std::make_shared<GuardExpr>();
  g->kind = Kind::Cmp;
  g->lhs = lhs;
  g->rhs = rhs;
  g->op = op;
  return g;
}

GuardPtr GuardExpr::make_and(GuardPtr a, GuardPtr b) {
  auto g = std::make_shared<GuardExpr>();
  g->kind = Kind::And;
  g->a = std::move(a);
  g->b = std::move(b);
  return g;
}

GuardPtr GuardExpr::make_or(GuardPtr a, GuardPtr b) {
  auto g = std::make_shared<GuardExpr>();
  g->kind = Kind::Or;
  g->a = std::move(a);
  g->b = std::move(b);
  return g;
}

GuardPtr GuardExpr::make_not(GuardPtr a) {
  auto g = std::make_shared<GuardExpr>();
  g->kind = Kind::Not;
  g->a = std::move(a);
  return g;
}

namespace {

uint8_t byte_at(const Bytes& input, int64_t offset) {
  if (offset < 0 || static_cast<size_t>(offset) >= input.size()) return 0;
  return input[static_cast<size_t>(offset)];
}

}  // namespace

int64_t read_operand(const GuardOperand& operand, const Bytes& input) {
  switch (operand.kind) {
    case OperandKind::Literal:
      return operand.value;
    case OperandKind::ByteAt:
      return byte_at(input, operand.value);
    case OperandKind::I8At:
      return static_cast<int8_t>(byte_at(input, operand.value));
    case OperandKind::I16leAt: {
      uint16_t v = static_cast<uint16_t>(byte_at(input, operand.value)) |
                   static_cast<uint16_t>(byte_at(input, operand.value + 1)) << 8;
      return static_cast<int16_t>(v);
    }
    case OperandKind::I32leAt: {
      uint32_t v = static_cast<uint32_t>(byte_at(input, operand.value)) |
                   static_cast<uint32_t>(byte_at(input, operand.value + 1)) << 8 |
                   static_cast<uint32_t>(byte_at(input, operand.value + 2)) << 16 |
                   static_cast<uint32_t>(byte_at(input, operand.value + 3)) << 24;
      return static_cast<int32_t>(v);
    }
  }
  return 0;
}

bool eval_guard(const GuardExpr& guard, const Bytes& input) {
  switch (guard.kind) {
    case GuardExpr::Kind::Cmp: {
      int64_t l = read_operand(guard.lhs, input);
      int64_t r = read_operand(guard.rhs, input);
      switch (guard.op) {
        case CmpOp::Lt: return l < r;
        case CmpOp::Le: return l <= r;
        case CmpOp::Eq: return l == r;
        case CmpOp::Ne: return l != r;
        case CmpOp::Ge: return l >= r;
        case CmpOp::Gt: return l > r;
      }
      return false;
    }
    case GuardExpr::Kind::And:
      return eval_guard(*guard.a, input) && eval_guard(*guard.b, input);
    case GuardExpr::Kind::Or:
      return eval_guard(*guard.a, input) || eval_guard(*guard.b, input);
    case GuardExpr::Kind::Not:
      return !eval_guard(*guard.a, input);
  }
  return false;
}

namespace {

size_t operand_extent(const GuardOperand& operand) {
  switch (operand.kind) {
    case OperandKind::Literal: return 0;
    case OperandKind::ByteAt:
    case OperandKind::I8At: return static_cast<size_t>(operand.value) + 1;
    case OperandKind::I16leAt: return static_cast<size_t>(operand.value) + 2;
    case OperandKind::I32leAt: return static_cast<size_t>(operand.value) + 4;
  }
  return 0;
}

size_t guard_extent(const GuardExpr& guard) {
  switch (guard.kind) {
    case GuardExpr::Kind::Cmp:
      return std::max(operand_extent(guard.lhs), operand_extent(guard.rhs));
    case GuardExpr::Kind::And:
    case GuardExpr::Kind::Or:
      return std::max(guard_extent(*guard.a), guard_extent(*guard.b));
    case GuardExpr::Kind::Not:
      return guard_extent(*guard.a);
  }
  return 0;
}

}  // namespace

TargetProgram::TargetProgram(std::vector<BlockDef> blocks, int init_index,
                             GuardPtr initial_constraint)
    : blocks_(std::move(blocks)),
      init_index_(init_index),
      initial_constraint_(std::move(initial_constraint)) {
  for (size_t i = 0; i < blocks_.size(); ++i) {
    index_.emplace(blocks_[i].id, static_cast<int>(i));
  }
  for (const auto& block : blocks_) {
    for (const auto& edge : block.edges) {
      if (edge.guard) input_len_max_ = std::max(input_len_max_, guard_extent(*edge.guard));
    }
  }
  if (initial_constraint_) {
    input_len_max_ = std::max(input_len_max_, guard_extent(*initial_constraint_));
  }
}

int TargetProgram::index_of(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? -1 : it->second;
}

bool TargetProgram::satisfies_initial_constraint(const Bytes& input) const {
  return !initial_constraint_ || eval_guard(*initial_constraint_, input);
}

int TargetProgram::crash_block_count() const {
  int n = 0;
  for (const auto& block : blocks_) n += block.is_crash ? 1 : 0;
  return n;
}

std::vector<std::string> ExecutionTrace::block_ids(const TargetProgram& program) const {
  std::vector<std::string> ids;
  ids.reserve(block_seq.size());
  for (int index : block_seq) ids.push_back(program.id_of(index));
  return ids;
}

ExecutionTrace execute(const TargetProgram& program, const Bytes& input, int step_limit) {
  ExecutionTrace trace;
  int current = program.init_index();
  trace.block_seq.push_back(current);
  for (;;) {
    const BlockDef& block = program.block(current);
    if (block.is_crash) {
      trace.crashed = true;
      trace.termination = Termination::CrashBlock;
      return trace;
    }
    if (static_cast<int>(trace.edge_seq.size()) >= step_limit) {
      trace.termination = Termination::StepLimit;
      return trace;
    }
    int next = -1;
    for (const auto& edge : block.edges) {
      if (!edge.guard || eval_guard(*edge.guard, input)) {
        next = edge.dest;
        break;
      }
    }
    if (next < 0) {
      trace.termination = Termination::NoMatchingGuard;
      return trace;
    }
    trace.edge_seq.emplace_back(current, next);
    trace.block_seq.push_back(next);
    current = next;
  }
}

bool Cfg::has_edge(int from, int to) const {
  const auto& succ = successors[static_cast<size_t>(from)];
  return std::binary_search(succ.begin(), succ.end(), to);
}

size_t Cfg::edge_count() const {
  size_t n = 0;
  for (const auto& succ : successors) n += succ.size();
  return n;
}

void Cfg::add_dynamic_edge(int from, int to) {
  auto& succ = successors[static_cast<size_t>(from)];
  auto it = std::lower_bound(succ.begin(), succ.end(), to);
  if (it != succ.end() && *it == to) return;
  succ.insert(it, to);
  auto& pred = pre_dominants[static_cast<size_t>(to)];
  pred.insert(std::lower_bound(pred.begin(), pred.end(), from), from);
}

Cfg build_cfg(const TargetProgram& program) {
  Cfg cfg;
  cfg.block_count = program.block_count();
  cfg.ids.reserve(program.blocks().size());
  cfg.successors.assign(program.blocks().size(), {});
  cfg.pre_dominants.assign(program.blocks().size(), {});
  for (const auto& block : program.blocks()) cfg.ids.push_back(block.id);
  for (int from = 0; from < cfg.block_count; ++from) {
    std::set<int> dests;
    for (const auto& edge : program.block(from).edges) dests.insert(edge.dest);
    for (int to : dests) {
      cfg.successors[static_cast<size_t>(from)].push_back(to);
      cfg.pre_dominants[static_cast<size_t>(to)].push_back(from);
    }
  }
  for (auto& pred : cfg.pre_dominants) std::sort(pred.begin(), pred.end());
  return cfg;
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

ParseError::ParseError(int line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

namespace {

struct Token {
  enum class Kind { Ident, Int, Symbol, End };
  Kind kind = Kind::End;
  std::string text;
  int64_t value = 0;
};

class LineLexer {
 public:
  LineLexer(const std::string& line, int line_no) : line_(line), line_no_(line_no) { advance(); }

  const Token& peek() const { return token_; }

  Token take() {
    Token t = token_;
    advance();
    return t;
  }

  bool accept_symbol(const std::string& s) {
    if (token_.kind == Token::Kind::Symbol && token_.text == s) {
      advance();
      return true;
    }
    return false;
  }

  void expect_symbol(const std::string& s) {
    if (!accept_symbol(s)) fail("expected '" + s + "'");
  }

  std::string expect_ident() {
    if (token_.kind != Token::Kind::Ident) fail("expected identifier");
    return take().text;
  }

  bool at_end() const { return token_.kind == Token::Kind::End; }

  [[noreturn]] void fail(const std::string& message) const {
    throw ParseError(line_no_, message);
  }

 private:
  void advance() {
    while (pos_ < line_.size() && std::isspace(static_cast<unsigned char>(line_[pos_]))) ++pos_;
    if (pos_ >= line_.size() || line_[pos_] == '#') {
      token_ = {Token::Kind::End, "", 0};
      return;
    }
    char c = line_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < line_.size() &&
             (std::isalnum(static_cast<unsigned char>(line_[pos_])) || line_[pos_] == '_' ||
              line_[pos_] == '-')) {
        // '-' inside an identifier only when followed by an alnum and preceded
        // by one ("deep-nest" style names), never as a trailing dash.
        if (line_[pos_] == '-') {
          if (pos_ + 1 >= line_.size() ||
              !(std::isalnum(static_cast<unsigned char>(line_[pos_ + 1])) || line_[pos_ + 1] == '_'))
            break;
        }
        ++pos_;
      }
      token_ = {Token::Kind::Ident, line_.substr(start, pos_ - start), 0};
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '-' && pos_ + 1 < line_.size() &&
         std::isdigit(static_cast<unsigned char>(line_[pos_ + 1])))) {
      size_t start = pos_;
      if (c == '-') ++pos_;
      while (pos_ < line_.size() && std::isdigit(static_cast<unsigned char>(line_[pos_]))) ++pos_;
      Token t;
      t.kind = Token::Kind::Int;
      t.text = line_.substr(start, pos_ - start);
      try {
        t.value = std::stoll(t.text);
      } catch (const std::exception&) {
        throw ParseError(line_no_, "integer literal out of range: " + t.text);
      }
      token_ = t;
      return;
    }
    // multi-character symbols first
    static const char* kSymbols[] = {"->", "<=", ">=", "==", "!=", "<", ">", "[", "]", "(", ")", "{", "}"};
    for (const char* s : kSymbols) {
      size_t len = std::string(s).size();
      if (line_.compare(pos_, len, s) == 0) {
        pos_ += len;
        token_ = {Token::Kind::Symbol, s, 0};
        return;
      }
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  const std::string& line_;
  int line_no_;
  size_t pos_ = 0;
  Token token_;
};

GuardPtr parse_or(LineLexer& lex);

GuardOperand parse_operand(LineLexer& lex) {
  GuardOperand operand;
  if (lex.peek().kind == Token::Kind::Int) {
    operand.kind = OperandKind::Literal;
    operand.value = lex.take().value;
    return operand;
  }
  if (lex.peek().kind == Token::Kind::Ident) {
    std::string name = lex.take().text;
    if (name == "byte") operand.kind = OperandKind::ByteAt;
    else if (name == "i8") operand.kind = OperandKind::I8At;
    else if (name == "i16le") operand.kind = OperandKind::I16leAt;
    else if (name == "i32le") operand.kind = OperandKind::I32leAt;
    else lex.fail("unknown operand '" + name + "'");
    lex.expect_symbol("[");
    if (lex.peek().kind != Token::Kind::Int) lex.fail("expected offset");
    int64_t offset = lex.take().value;
    if (offset < 0) lex.fail("offsets must be non-negative");
    lex.expect_symbol("]");
    operand.value = offset;
    return operand;
  }
  lex.fail("expected operand");
}

GuardPtr parse_comparison(LineLexer& lex) {
  GuardOperand lhs = parse_operand(lex);
  CmpOp op;
  if (lex.accept_symbol("<=")) op = CmpOp::Le;
  else if (lex.accept_symbol(">=")) op = CmpOp::Ge;
  else if (lex.accept_symbol("==")) op = CmpOp::Eq;
  else if (lex.accept_symbol("!=")) op = CmpOp::Ne;
  else if (lex.accept_symbol("<")) op = CmpOp::Lt;
  else if (lex.accept_symbol(">")) op = CmpOp::Gt;
  else lex.fail("expected comparison operator");
  GuardOperand rhs = parse_operand(lex);
  return GuardExpr::make_cmp(lhs, op, rhs);
}

GuardPtr parse_unary(LineLexer& lex) {
  if (lex.peek().kind == Token::Kind::Ident && lex.peek().text == "not") {
    lex.take();
    return GuardExpr::make_not(parse_unary(lex));
  }
  if (lex.accept_symbol("(")) {
    GuardPtr inner = parse_or(lex);
    lex.expect_symbol(")");
    return inner;
  }
  return parse_comparison(lex);
}

GuardPtr parse_and(LineLexer& lex) {
  GuardPtr left = parse_unary(lex);
  while (lex.peek().kind == Token::Kind::Ident && lex.peek().text == "and") {
    lex.take();
    left = GuardExpr::make_and(left, parse_unary(lex));
  }
  return left;
}

GuardPtr parse_or(LineLexer& lex) {
  GuardPtr left = parse_and(lex);
  while (lex.peek().kind == Token::Kind::Ident && lex.peek().text == "or") {
    lex.take();
    left = GuardExpr::make_or(left, parse_and(lex));
  }
  return left;
}

struct PendingEdge {
  GuardPtr guard;
  std::string dest;
  int line;
};

}  // namespace

TargetProgram parse_target(const std::string& text) {
  std::vector<std::string> block_ids;
  std::vector<bool> crash_flags;
  std::vector<std::vector<PendingEdge>> pending;
  std::unordered_map<std::string, int> index;
  std::string init_id;
  int init_line = 0;
  bool in_block = false;

  std::istringstream stream(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(stream, raw)) {
    ++line_no;
    LineLexer lex(raw, line_no);
    if (lex.at_end()) continue;
    if (lex.peek().kind == Token::Kind::Ident && lex.peek().text == "init") {
      lex.take();
      if (!init_id.empty()) lex.fail("duplicate init declaration");
      if (in_block) lex.fail("init inside block");
      init_id = lex.expect_ident();
      init_line = line_no;
      if (!lex.at_end()) lex.fail("trailing tokens after init");
      continue;
    }
    if (lex.peek().kind == Token::Kind::Ident && lex.peek().text == "block") {
      lex.take();
      if (in_block) lex.fail("nested block");
      std::string id = lex.expect_ident();
      bool crash = false;
      if (lex.peek().kind == Token::Kind::Ident && lex.peek().text == "crash") {
        lex.take();
        crash = true;
      }
      lex.expect_symbol("{");
      if (!lex.at_end()) lex.fail("trailing tokens after '{'");
      if (index.count(id)) throw ParseError(line_no, "duplicate block id '" + id + "'");
      index.emplace(id, static_cast<int>(block_ids.size()));
      block_ids.push_back(id);
      crash_flags.push_back(crash);
      pending.emplace_back();
      in_block = true;
      continue;
    }
    if (lex.peek().kind == Token::Kind::Symbol && lex.peek().text == "}") {
      lex.take();
      if (!in_block) lex.fail("'}' outside block");
      if (!lex.at_end()) lex.fail("trailing tokens after '}'");
      in_block = false;
      continue;
    }
    if (!in_block) lex.fail("expected 'init', 'block' or edge inside a block");
    PendingEdge edge;
    edge.line = line_no;
    if (lex.peek().kind == Token::Kind::Ident && lex.peek().text == "else") {
      lex.take();
    } else if (lex.peek().kind == Token::Kind::Ident && lex.peek().text == "if") {
      lex.take();
      edge.guard = parse_or(lex);
    } else {
      lex.fail("expected 'if' or 'else'");
    }
    lex.expect_symbol("->");
    edge.dest = lex.expect_ident();
    if (!lex.at_end()) lex.fail("trailing tokens after edge");
    pending.back().push_back(std::move(edge));
  }

  if (in_block) throw ParseError(line_no, "unterminated block");
  if (init_id.empty()) throw ParseError(line_no == 0 ? 1 : line_no, "missing init declaration");
  if (block_ids.empty()) throw ParseError(line_no, "program has no blocks");
  auto init_it = index.find(init_id);
  if (init_it == index.end())
    throw ParseError(init_line, "init names unknown block '" + init_id + "'");

  std::vector<BlockDef> blocks(block_ids.size());
  for (size_t i = 0; i < block_ids.size(); ++i) {
    blocks[i].id = block_ids[i];
    blocks[i].is_crash = crash_flags[i];
    bool saw_else = false;
    for (const auto& edge : pending[i]) {
      if (saw_else)
        throw ParseError(edge.line, "edges after 'else' in block '" + block_ids[i] + "'");
      auto dest_it = index.find(edge.dest);
      if (dest_it == index.end())
        throw ParseError(edge.line, "unknown destination '" + edge.dest + "'");
      if (!edge.guard) saw_else = true;
      blocks[i].edges.push_back({edge.guard, dest_it->second});
    }
  }
  return TargetProgram(std::move(blocks), init_it->second);
}

// ---------------------------------------------------------------------------
// Serializer
// ---------------------------------------------------------------------------

namespace {

std::string operand_text(const GuardOperand& operand) {
  switch (operand.kind) {
    case OperandKind::Literal: return std::to_string(operand.value);
    case OperandKind::ByteAt: return "byte[" + std::to_string(operand.value) + "]";
    case OperandKind::I8At: return "i8[" + std::to_string(operand.value) + "]";
    case OperandKind::I16leAt: return "i16le[" + std::to_string(operand.value) + "]";
    case OperandKind::I32leAt: return "i32le[" + std::to_string(operand.value) + "]";
  }
  return "";
}

const char* cmp_text(CmpOp op) {
  switch (op) {
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Eq: return "==";
    case CmpOp::Ne: return "!=";
    case CmpOp::Ge: return ">=";
    case CmpOp::Gt: return ">";
  }
  return "==";
}

void guard_text(const GuardExpr& guard, std::string& out, int parent_level) {
  // levels: or = 0, and = 1, not = 2, cmp = 3
  int level;
  switch (guard.kind) {
    case GuardExpr::Kind::Or: level = 0; break;
    case GuardExpr::Kind::And: level = 1; break;
    case GuardExpr::Kind::Not: level = 2; break;
    default: level = 3; break;
  }
  bool parens = level < parent_level;
  if (parens) out += "(";
  switch (guard.kind) {
    case GuardExpr::Kind::Cmp:
      out += operand_text(guard.lhs);
      out += " ";
      out += cmp_text(guard.op);
      out += " ";
      out += operand_text(guard.rhs);
      break;
    case GuardExpr::Kind::And:
      guard_text(*guard.a, out, 1);
      out += " and ";
      guard_text(*guard.b, out, 2);
      break;
    case GuardExpr::Kind::Or:
      guard_text(*guard.a, out, 0);
      out += " or ";
      guard_text(*guard.b, out, 1);
      break;
    case GuardExpr::Kind::Not:
      out += "not ";
      guard_text(*guard.a, out, 3);
      break;
  }
  if (parens) out += ")";
}

}  // namespace

std::string serialize_guard(const GuardExpr& guard) {
  std::string out;
  guard_text(guard, out, 0);
  return out;
}

std::string serialize_target(const TargetProgram& program) {
  std::string out = "init " + program.init_id() + "\n";
  for (const auto& block : program.blocks()) {
    out += "block " + block.id + (block.is_crash ? " crash" : "") + " {\n";
    for (const auto& edge : block.edges) {
      out += "  ";
      if (edge.guard) {
        out += "if " + serialize_guard(*edge.guard);
      } else {
        out += "else";
      }
      out += " -> " + program.id_of(edge.dest) + "\n";
    }
    out += "}\n";
  }
  return out;
}

}  // namespace heatfuzz
