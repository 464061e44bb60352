#pragma once

// Shared test fixtures: the transcribed worked reward example, random DAG
// generation for the Monte-Carlo cross-checks, and the desk-scale campaign
// setup used by the end-to-end experiments.

#include <string>
#include <vector>

#include "heatfuzz/config.hpp"
#include "heatfuzz/coverage.hpp"
#include "heatfuzz/markov.hpp"
#include "heatfuzz/mutation.hpp"
#include "heatfuzz/rng.hpp"
#include "heatfuzz/target.hpp"

namespace heatfuzz::testfix {

inline Bytes flag_input(int32_t a, int32_t b, int32_t c, const Bytes& buf) {
  Bytes out(12 + buf.size(), 0);
  for (int i = 0; i < 4; ++i) {
    out[static_cast<size_t>(i)] = static_cast<uint8_t>(static_cast<uint32_t>(a) >> (8 * i));
    out[static_cast<size_t>(4 + i)] = static_cast<uint8_t>(static_cast<uint32_t>(b) >> (8 * i));
    out[static_cast<size_t>(8 + i)] = static_cast<uint8_t>(static_cast<uint32_t>(c) >> (8 * i));
  }
  for (size_t i = 0; i < buf.size(); ++i) out[12 + i] = buf[i];
  return out;
}

// Initial corpus for the bundled flag target: three flag-setting seeds with
// distinct buffer bytes, one all-zero seed, and a spread of filler seeds that
// keep the unguided scheduler busy elsewhere.
inline std::vector<Bytes> motivating_corpus(int filler = 87) {
  std::vector<Bytes> corpus;
  corpus.push_back(Bytes(15, 0));
  corpus.push_back(flag_input(200, -1, -10, {0, 0, 0}));
  corpus.push_back(flag_input(200, -1, -10, {'A', 'q', '~'}));
  corpus.push_back(flag_input(200, -1, -10, {0x99, 0x33, 0x5a}));
  for (int j = 0; j < filler; ++j) {
    uint8_t v = static_cast<uint8_t>(7 + j * 11);
    if (v == 0xff) v = 0xfe;
    Bytes junk(15, v);
    junk[14] = static_cast<uint8_t>(j);
    corpus.push_back(junk);
  }
  return corpus;
}

inline TokenDictionary motivating_dict() { return TokenDictionary({{'X'}, {'A'}}); }

inline FuzzerConfig motivating_config(uint64_t seed, FuzzMode mode, uint64_t max_execs) {
  FuzzerConfig config;
  config.rng_seed = seed;
  config.mode = mode;
  config.max_execs = max_execs;
  config.window_execs = 100000;
  config.iter_limit = 6000;
  config.max_input_len = 64;
  config.train.max_samples = 3000;
  return config;
}

struct Figure3 {
  TargetProgram program;
  Cfg cfg;
  GlobalCoverage gc;
  // Expected rewards for B1..B8, in block order.
  std::vector<double> expected_rewards;

  static Figure3 make() {
    Figure3 out{parse_target(demo_target_source("figure3")),
                {},
                GlobalCoverage(8),
                {0.001, 0.002, 0.086, 1.333, 0.143, 0.0, 0.0, 1.0}};
    out.cfg = build_cfg(out.program);
    auto id = [&](const char* name) { return out.program.index_of(name); };
    // Transition tallies after the worked example's 998 executions. Block B4
    // and B8 were never reached; B5 was entered 4 times and B3 13 times.
    out.gc.add_edge_count(id("B1"), id("B2"), 499);
    out.gc.add_edge_count(id("B1"), id("B6"), 499);
    out.gc.add_edge_count(id("B2"), id("B3"), 13);
    out.gc.add_edge_count(id("B2"), id("B5"), 4);
    out.gc.add_edge_count(id("B2"), id("B6"), 482);
    out.gc.add_edge_count(id("B3"), id("B6"), 13);
    out.gc.add_edge_count(id("B5"), id("B6"), 2);
    out.gc.add_edge_count(id("B5"), id("B7"), 2);
    return out;
  }
};

struct RandomDag {
  Cfg cfg;
  GlobalCoverage gc;
  BlockBitset covered;

  static RandomDag make(Rng& rng, int max_blocks) {
    int n = 4 + static_cast<int>(rng.below(static_cast<uint32_t>(max_blocks - 3)));
    RandomDag out{{}, GlobalCoverage(n), BlockBitset(n)};
    out.cfg.block_count = n;
    out.cfg.successors.assign(static_cast<size_t>(n), {});
    out.cfg.pre_dominants.assign(static_cast<size_t>(n), {});
    for (int i = 0; i < n; ++i) out.cfg.ids.push_back("n" + std::to_string(i));
    for (int from = 0; from < n - 1; ++from) {
      int fanout = 1 + static_cast<int>(rng.below(3));
      for (int e = 0; e < fanout; ++e) {
        int to = from + 1 + static_cast<int>(rng.below(static_cast<uint32_t>(n - from - 1)));
        out.cfg.add_dynamic_edge(from, to);
      }
    }
    for (int from = 0; from < n; ++from)
      for (int to : out.cfg.successors[static_cast<size_t>(from)])
        out.gc.add_edge_count(from, to, rng.below(200));
    for (int b = 0; b < n; ++b)
      if (rng.unit() < 0.6) out.covered.set(b);
    return out;
  }
};

}  // namespace heatfuzz::testfix
