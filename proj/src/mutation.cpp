#include "heatfuzz/mutation.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace heatfuzz {

const char* mutator_name(MutatorId id) {
  switch (id) {
    case MutatorId::BitFlip1: return "bitflip";
    case MutatorId::ByteFlip: return "byteflip";
    case MutatorId::ArithPlus: return "arth+";
    case MutatorId::ArithMinus: return "arth-";
    case MutatorId::InterestingReplace: return "interest";
    case MutatorId::DictionaryReplace: return "dictionary";
    case MutatorId::RandomByte: return "random";
  }
  throw std::invalid_argument("unknown mutator code");
}

MutatorId mutator_from_name(const std::string& name) {
  for (int i = 0; i < kMutatorCount; ++i) {
    MutatorId id = static_cast<MutatorId>(i);
    if (name == mutator_name(id)) return id;
  }
  throw std::invalid_argument("unknown mutator '" + name + "'");
}

TokenDictionary::TokenDictionary(std::vector<Bytes> tokens) : tokens_(std::move(tokens)) {
  for (const auto& token : tokens_)
    if (token.empty()) throw std::invalid_argument("dictionary tokens must be non-empty");
}

namespace {

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

TokenDictionary TokenDictionary::parse(const std::string& text) {
  std::vector<Bytes> tokens;
  std::istringstream stream(text);
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    Bytes token;
    for (size_t i = 0; i < line.size();) {
      if (line[i] == '\\' && i + 1 < line.size() && line[i + 1] == 'x') {
        int hi = i + 2 < line.size() ? hex_value(line[i + 2]) : -1;
        int lo = i + 3 < line.size() ? hex_value(line[i + 3]) : -1;
        if (hi < 0 || lo < 0)
          throw std::runtime_error("dictionary line " + std::to_string(line_no) +
                                   ": bad \\xNN escape");
        token.push_back(static_cast<uint8_t>(hi * 16 + lo));
        i += 4;
      } else {
        token.push_back(static_cast<uint8_t>(line[i]));
        ++i;
      }
    }
    tokens.push_back(std::move(token));
  }
  return TokenDictionary(std::move(tokens));
}

TokenDictionary TokenDictionary::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::in | std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dictionary '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::string TokenDictionary::serialize() const {
  std::string out;
  static const char* kHex = "0123456789abcdef";
  for (const auto& token : tokens_) {
    for (uint8_t b : token) {
      if (std::isprint(b) && b != '\\' && b != '#') {
        out += static_cast<char>(b);
      } else {
        out += "\\x";
        out += kHex[b >> 4];
        out += kHex[b & 0xf];
      }
    }
    out += '\n';
  }
  return out;
}

int mutator_param_range(MutatorId id, const TokenDictionary& dict) {
  switch (id) {
    case MutatorId::BitFlip1: return 8;
    case MutatorId::ByteFlip: return 1;
    case MutatorId::ArithPlus: return kArithMax;
    case MutatorId::ArithMinus: return kArithMax;
    case MutatorId::InterestingReplace: return static_cast<int>(kInterestingBytes.size());
    case MutatorId::DictionaryReplace: return static_cast<int>(dict.size());
    case MutatorId::RandomByte: return 256;
  }
  return 0;
}

int mutation_footprint(const Mutation& m, const TokenDictionary& dict) {
  if (m.mutator == MutatorId::DictionaryReplace)
    return static_cast<int>(dict.token(static_cast<size_t>(m.param)).size());
  return 1;
}

namespace {

// Parameter ranges enumerate 0-based; arith deltas are 1-based.
int param_from_index(MutatorId id, int index) {
  if (id == MutatorId::ArithPlus || id == MutatorId::ArithMinus) return index + 1;
  return index;
}

}  // namespace

Bytes apply_mutation(const Bytes& seed, const Mutation& m, const TokenDictionary& dict) {
  if (m.position < 0 || static_cast<size_t>(m.position) >= seed.size())
    throw std::out_of_range("mutation position out of range");
  switch (m.mutator) {
    case MutatorId::DictionaryReplace: {
      if (m.param < 0 || static_cast<size_t>(m.param) >= dict.size())
        throw std::out_of_range("dictionary token index out of range");
      const Bytes& token = dict.token(static_cast<size_t>(m.param));
      if (static_cast<size_t>(m.position) + token.size() > seed.size())
        throw std::out_of_range("dictionary token past end of input");
      break;
    }
    case MutatorId::BitFlip1:
      if (m.param < 0 || m.param > 7) throw std::out_of_range("bit index out of range");
      break;
    case MutatorId::ByteFlip:
      if (m.param != 0) throw std::out_of_range("byteflip takes no parameter");
      break;
    case MutatorId::ArithPlus:
    case MutatorId::ArithMinus:
      if (m.param < 1 || m.param > kArithMax) throw std::out_of_range("arith delta out of range");
      break;
    case MutatorId::InterestingReplace:
      if (m.param < 0 || static_cast<size_t>(m.param) >= kInterestingBytes.size())
        throw std::out_of_range("interesting value index out of range");
      break;
    case MutatorId::RandomByte:
      if (m.param < 0 || m.param > 255) throw std::out_of_range("byte value out of range");
      break;
  }

  Bytes out = seed;
  size_t pos = static_cast<size_t>(m.position);
  switch (m.mutator) {
    case MutatorId::BitFlip1:
      out[pos] ^= static_cast<uint8_t>(1u << m.param);
      break;
    case MutatorId::ByteFlip:
      out[pos] ^= 0xff;
      break;
    case MutatorId::ArithPlus:
      out[pos] = static_cast<uint8_t>(out[pos] + m.param);
      break;
    case MutatorId::ArithMinus:
      out[pos] = static_cast<uint8_t>(out[pos] - m.param);
      break;
    case MutatorId::InterestingReplace:
      out[pos] = static_cast<uint8_t>(kInterestingBytes[static_cast<size_t>(m.param)]);
      break;
    case MutatorId::DictionaryReplace: {
      const Bytes& token = dict.token(static_cast<size_t>(m.param));
      for (size_t i = 0; i < token.size(); ++i) out[pos + i] = token[i];
      break;
    }
    case MutatorId::RandomByte:
      out[pos] = static_cast<uint8_t>(m.param);
      break;
  }
  return out;
}

DeterministicSchedule::DeterministicSchedule(size_t seed_len, const TokenDictionary& dict)
    : seed_len_(seed_len), dict_(&dict) {
  skip_exhausted();
}

void DeterministicSchedule::reset() {
  mutator_ = 0;
  position_ = 0;
  param_ = 0;
  skip_exhausted();
}

bool DeterministicSchedule::position_valid() const {
  MutatorId id = static_cast<MutatorId>(mutator_);
  if (id != MutatorId::DictionaryReplace) return true;
  const Bytes& token = dict_->token(static_cast<size_t>(param_));
  return position_ + token.size() <= seed_len_;
}

void DeterministicSchedule::skip_exhausted() {
  while (mutator_ < kMutatorCount) {
    MutatorId id = static_cast<MutatorId>(mutator_);
    int range = mutator_param_range(id, *dict_);
    if (range == 0 || position_ >= seed_len_) {
      ++mutator_;
      position_ = 0;
      param_ = 0;
      continue;
    }
    if (param_ >= range) {
      param_ = 0;
      ++position_;
      continue;
    }
    if (!position_valid()) {
      ++param_;
      continue;
    }
    return;
  }
}

std::optional<Mutation> DeterministicSchedule::next() {
  if (mutator_ >= kMutatorCount) return std::nullopt;
  MutatorId id = static_cast<MutatorId>(mutator_);
  Mutation m{id, static_cast<int>(position_), param_from_index(id, param_)};
  ++param_;
  skip_exhausted();
  return m;
}

uint64_t DeterministicSchedule::total_count(size_t seed_len, const TokenDictionary& dict) {
  uint64_t total = 0;
  for (int i = 0; i < kMutatorCount; ++i) {
    MutatorId id = static_cast<MutatorId>(i);
    if (id == MutatorId::DictionaryReplace) {
      for (size_t t = 0; t < dict.size(); ++t) {
        size_t len = dict.token(t).size();
        if (len <= seed_len) total += seed_len - len + 1;
      }
    } else {
      total += static_cast<uint64_t>(mutator_param_range(id, dict)) * seed_len;
    }
  }
  return total;
}

std::vector<Mutation> collect_schedule(size_t seed_len, const TokenDictionary& dict) {
  std::vector<Mutation> out;
  DeterministicSchedule schedule(seed_len, dict);
  while (auto m = schedule.next()) out.push_back(*m);
  return out;
}

Mutation random_mutation(size_t seed_len, Rng& rng, const TokenDictionary& dict) {
  for (;;) {
    MutatorId id = static_cast<MutatorId>(rng.below(kMutatorCount));
    int range = mutator_param_range(id, dict);
    if (range == 0) continue;  // no dictionary loaded
    Mutation m;
    m.mutator = id;
    m.position = static_cast<int>(rng.below(static_cast<uint32_t>(seed_len)));
    m.param = param_from_index(id, static_cast<int>(rng.below(static_cast<uint32_t>(range))));
    if (id == MutatorId::DictionaryReplace) {
      const Bytes& token = dict.token(static_cast<size_t>(m.param));
      if (static_cast<size_t>(m.position) + token.size() > seed_len) continue;
    }
    return m;
  }
}

std::pair<Bytes, std::vector<Mutation>> havoc_step(const Bytes& seed, Rng& rng,
                                                   const TokenDictionary& dict) {
  if (seed.empty()) throw std::invalid_argument("havoc needs a non-empty seed");
  int count = 1 + static_cast<int>(rng.below(8));
  Bytes out = seed;
  std::vector<Mutation> applied;
  applied.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    Mutation m = random_mutation(out.size(), rng, dict);
    out = apply_mutation(out, m, dict);
    applied.push_back(m);
  }
  return {std::move(out), std::move(applied)};
}

}  // namespace heatfuzz
