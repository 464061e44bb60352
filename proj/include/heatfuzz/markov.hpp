#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heatfuzz/coverage.hpp"
#include "heatfuzz/rng.hpp"
#include "heatfuzz/target.hpp"

namespace heatfuzz {

// Transition-probability abstraction estimated from edge-hit counts with
// add-one smoothing: Pr(b1,b2) = (1 + #(b1,b2)) / (#b1 + n), n = out-degree.
// Rows over blocks with outgoing edges sum to exactly 1; every edge
// probability is strictly positive.
struct Dtmc {
  int block_count = 0;
  // rows[b] holds (successor, probability) pairs sorted by successor; empty
  // for sink blocks.
  std::vector<std::vector<std::pair<int, double>>> rows;
  // Backing counts snapshot.
  std::vector<uint64_t> out_taken;
  std::vector<std::vector<std::pair<int, uint64_t>>> edge_taken;

  double prob(int from, int to) const;
  double row_sum(int block) const;
};

Dtmc estimate_dtmc(const GlobalCoverage& gc, const Cfg& cfg);

struct RewardVector {
  std::vector<double> reward;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
};

inline constexpr double kRewardTol = 1e-9;
inline constexpr int kRewardMaxIters = 1000000;

// Fixed-point iteration of R <- c + P*R with c_b = 1 for uncovered blocks.
// Non-convergence is reported through the flags, never thrown.
RewardVector solve_rewards(const Dtmc& dtmc, const BlockBitset& covered,
                           double tol = kRewardTol, int max_iters = kRewardMaxIters);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Independent check for solve_rewards: the reward of b equals the expected
// number of uncovered-block visits (counting b itself) along a random walk
// from b that follows the transition probabilities and stops at blocks with
// no outgoing edges or after the step cap.
McEstimate mc_reward_oracle(const Dtmc& dtmc, const BlockBitset& covered, int block,
                            uint64_t walks, Rng& rng, int step_cap = 10000);

// Probability that a random walk from `init` ever visits `target`, by making
// the target absorbing and iterating the hitting-probability system.
double reach_probability(const Dtmc& dtmc, int target, int init, double tol = 1e-9,
                         int max_iters = 1000000);

struct CriticalSelection {
  std::vector<int> target_uncovered;          // B_c, sorted by block index
  std::vector<int> critical;                  // selected pre-dominant blocks, sorted
  std::vector<std::vector<int>> target_of;    // per critical block: its B_c successors
  double k_percent = 0.0;
  double k_prime = 0.0;

  bool empty() const { return target_uncovered.empty() && critical.empty(); }
};

inline constexpr double kDefaultKPercent = 10.0;
inline constexpr double kDefaultKPrime = 0.5;

// B_c = top ceil(k% * |uncovered|) uncovered blocks by reward (ties broken by
// smaller block index); critical = covered pre-dominant blocks of B_c whose
// reach probability from init does not exceed k'.
CriticalSelection select_critical_blocks(const RewardVector& rewards, const BlockBitset& covered,
                                         const Cfg& cfg, const Dtmc& dtmc, int init_block,
                                         double k_percent = kDefaultKPercent,
                                         double k_prime = kDefaultKPrime);

// One row per block: block_id, covered(0/1), reward, reach_probability, is_critical.
std::string rewards_csv(const Cfg& cfg, const BlockBitset& covered, const RewardVector& rewards,
                        const Dtmc& dtmc, int init_block, const CriticalSelection& selection);

}  // namespace heatfuzz
