#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "heatfuzz/rng.hpp"
#include "heatfuzz/target.hpp"

namespace heatfuzz {

// Catalog order is the stable integer coding used in logs and model
// embeddings.
enum class MutatorId : int {
  BitFlip1 = 0,
  ByteFlip = 1,
  ArithPlus = 2,
  ArithMinus = 3,
  InterestingReplace = 4,
  DictionaryReplace = 5,
  RandomByte = 6,
};

inline constexpr int kMutatorCount = 7;
inline constexpr int kArithMax = 35;
inline constexpr std::array<int, 9> kInterestingBytes = {-128, -1, 0, 1, 16, 32, 64, 100, 127};

const char* mutator_name(MutatorId id);
MutatorId mutator_from_name(const std::string& name);

struct Mutation {
  MutatorId mutator = MutatorId::BitFlip1;
  int position = 0;
  int param = 0;

  bool operator==(const Mutation& other) const = default;
};

class TokenDictionary {
 public:
  TokenDictionary() = default;
  explicit TokenDictionary(std::vector<Bytes> tokens);

  size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }
  const Bytes& token(size_t index) const { return tokens_[index]; }

  // One token per line; non-printable bytes hex-escaped as \xNN.
  static TokenDictionary parse(const std::string& text);
  static TokenDictionary load_file(const std::string& path);
  std::string serialize() const;

 private:
  std::vector<Bytes> tokens_;
};

// Number of parameters a mutator enumerates per position in the
// deterministic schedule.
int mutator_param_range(MutatorId id, const TokenDictionary& dict);

// Bytes written starting at the mutation position (1 except for dictionary
// tokens).
int mutation_footprint(const Mutation& m, const TokenDictionary& dict);

// Returns a new sequence of identical length; only the footprint may differ.
// Throws std::out_of_range / std::invalid_argument on invalid mutations.
Bytes apply_mutation(const Bytes& seed, const Mutation& m, const TokenDictionary& dict);

// Lazy enumeration of the full single-site schedule: every mutator in catalog
// order, every position, every parameter in range. Dictionary entries that
// would run past the end of the seed are skipped.
class DeterministicSchedule {
 public:
  DeterministicSchedule(size_t seed_len, const TokenDictionary& dict);

  std::optional<Mutation> next();
  void reset();

  // Total number of mutations the schedule yields (pure function of the seed
  // length and dictionary).
  static uint64_t total_count(size_t seed_len, const TokenDictionary& dict);

 private:
  bool position_valid() const;
  void skip_exhausted();

  size_t seed_len_;
  const TokenDictionary* dict_;
  int mutator_ = 0;
  size_t position_ = 0;
  int param_ = 0;
};

std::vector<Mutation> collect_schedule(size_t seed_len, const TokenDictionary& dict);

// Applies 1-8 random single-byte mutations; length preserving. The returned
// list is what was applied, in order (logged with position -1 since there is
// no single site).
std::pair<Bytes, std::vector<Mutation>> havoc_step(const Bytes& seed, Rng& rng,
                                                   const TokenDictionary& dict);

// Draw one random single-site mutation valid for the given length.
Mutation random_mutation(size_t seed_len, Rng& rng, const TokenDictionary& dict);

}  // namespace heatfuzz
