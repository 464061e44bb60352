#pragma once

#include <cstdint>

namespace heatfuzz {

// Deterministic 64-bit generator (splitmix64). We roll our own instead of
// using <random> distributions because their output is implementation-defined
// and campaign logs must be byte-identical across platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform integer in [0, bound). bound must be >= 1.
  uint32_t below(uint32_t bound) {
    return static_cast<uint32_t>((static_cast<__uint128_t>(next_u64()) * bound) >> 64);
  }

  // Uniform double in [0, 1).
  double unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Derive an independent stream (e.g. one per subsystem).
  Rng split() { return Rng(next_u64() ^ 0xd1b54a32d192ed03ULL); }

 private:
  uint64_t state_;
};

}  // namespace heatfuzz
