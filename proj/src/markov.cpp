#include "heatfuzz/markov.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace heatfuzz {

double Dtmc::prob(int from, int to) const {
  for (const auto& [succ, p] : rows[static_cast<size_t>(from)])
    if (succ == to) return p;
  return 0.0;
}

double Dtmc::row_sum(int block) const {
  double sum = 0.0;
  for (const auto& [succ, p] : rows[static_cast<size_t>(block)]) sum += p;
  return sum;
}

Dtmc estimate_dtmc(const GlobalCoverage& gc, const Cfg& cfg) {
  Dtmc dtmc;
  dtmc.block_count = cfg.block_count;
  dtmc.rows.assign(static_cast<size_t>(cfg.block_count), {});
  dtmc.out_taken.assign(static_cast<size_t>(cfg.block_count), 0);
  dtmc.edge_taken.assign(static_cast<size_t>(cfg.block_count), {});
  for (int from = 0; from < cfg.block_count; ++from) {
    const auto& succ = cfg.successors[static_cast<size_t>(from)];
    if (succ.empty()) continue;
    uint64_t total = gc.out_taken(from);
    dtmc.out_taken[static_cast<size_t>(from)] = total;
    double denom = static_cast<double>(total) + static_cast<double>(succ.size());
    auto& row = dtmc.rows[static_cast<size_t>(from)];
    auto& counts = dtmc.edge_taken[static_cast<size_t>(from)];
    row.reserve(succ.size());
    counts.reserve(succ.size());
    for (int to : succ) {
      uint64_t taken = gc.edge_taken(from, to);
      counts.emplace_back(to, taken);
      row.emplace_back(to, (1.0 + static_cast<double>(taken)) / denom);
    }
  }
  return dtmc;
}

RewardVector solve_rewards(const Dtmc& dtmc, const BlockBitset& covered, double tol,
                           int max_iters) {
  size_t n = static_cast<size_t>(dtmc.block_count);
  RewardVector out;
  out.reward.assign(n, 0.0);
  std::vector<double> next(n, 0.0);
  constexpr double kDivergenceCap = 1e15;
  for (int iter = 0; iter < max_iters; ++iter) {
    double delta = 0.0;
    double largest = 0.0;
    for (size_t b = 0; b < n; ++b) {
      double value = covered.test(static_cast<int>(b)) ? 0.0 : 1.0;
      for (const auto& [succ, p] : dtmc.rows[b]) value += p * out.reward[static_cast<size_t>(succ)];
      next[b] = value;
      delta = std::max(delta, std::abs(value - out.reward[b]));
      largest = std::max(largest, value);
    }
    out.reward.swap(next);
    out.iterations = iter + 1;
    out.residual = delta;
    if (delta < tol) {
      out.converged = true;
      return out;
    }
    // Probability-1 cycles through uncovered blocks diverge; stop and report
    // the capped values instead of spinning to the iteration limit.
    if (largest > kDivergenceCap) break;
  }
  out.converged = false;
  return out;
}

McEstimate mc_reward_oracle(const Dtmc& dtmc, const BlockBitset& covered, int block,
                            uint64_t walks, Rng& rng, int step_cap) {
  double sum = 0.0;
  double sum_sq = 0.0;
  for (uint64_t w = 0; w < walks; ++w) {
    int current = block;
    uint64_t visits = covered.test(current) ? 0 : 1;
    for (int step = 0; step < step_cap; ++step) {
      const auto& row = dtmc.rows[static_cast<size_t>(current)];
      if (row.empty()) break;
      double u = rng.unit();
      double acc = 0.0;
      int chosen = row.back().first;
      for (const auto& [succ, p] : row) {
        acc += p;
        if (u < acc) {
          chosen = succ;
          break;
        }
      }
      current = chosen;
      if (!covered.test(current)) ++visits;
    }
    double x = static_cast<double>(visits);
    sum += x;
    sum_sq += x * x;
  }
  McEstimate est;
  double n = static_cast<double>(walks);
  est.mean = sum / n;
  if (walks > 1) {
    double variance = std::max(0.0, (sum_sq - n * est.mean * est.mean) / (n - 1.0));
    est.std_error = std::sqrt(variance / n);
  }
  return est;
}

double reach_probability(const Dtmc& dtmc, int target, int init, double tol, int max_iters) {
  if (target == init) return 1.0;
  size_t n = static_cast<size_t>(dtmc.block_count);
  std::vector<double> hit(n, 0.0);
  hit[static_cast<size_t>(target)] = 1.0;
  std::vector<double> next(n, 0.0);
  for (int iter = 0; iter < max_iters; ++iter) {
    double delta = 0.0;
    for (size_t b = 0; b < n; ++b) {
      if (static_cast<int>(b) == target) {
        next[b] = 1.0;
        continue;
      }
      double value = 0.0;
      for (const auto& [succ, p] : dtmc.rows[b]) value += p * hit[static_cast<size_t>(succ)];
      next[b] = value;
      delta = std::max(delta, std::abs(value - hit[b]));
    }
    hit.swap(next);
    if (delta < tol) break;
  }
  return hit[static_cast<size_t>(init)];
}

CriticalSelection select_critical_blocks(const RewardVector& rewards, const BlockBitset& covered,
                                         const Cfg& cfg, const Dtmc& dtmc, int init_block,
                                         double k_percent, double k_prime) {
  CriticalSelection out;
  out.k_percent = k_percent;
  out.k_prime = k_prime;

  std::vector<int> uncovered;
  for (int b = 0; b < cfg.block_count; ++b)
    if (!covered.test(b)) uncovered.push_back(b);
  if (uncovered.empty()) return out;

  // Rank-based selection: sort by (reward desc, block index asc).
  std::vector<int> ranked = uncovered;
  std::stable_sort(ranked.begin(), ranked.end(), [&](int a, int b) {
    double ra = rewards.reward[static_cast<size_t>(a)];
    double rb = rewards.reward[static_cast<size_t>(b)];
    if (ra != rb) return ra > rb;
    return a < b;
  });
  size_t take = static_cast<size_t>(
      std::ceil(k_percent / 100.0 * static_cast<double>(uncovered.size())));
  take = std::min(std::max<size_t>(take, 0), ranked.size());
  out.target_uncovered.assign(ranked.begin(), ranked.begin() + static_cast<long>(take));
  std::sort(out.target_uncovered.begin(), out.target_uncovered.end());

  std::vector<std::vector<int>> targets_by_block(static_cast<size_t>(cfg.block_count));
  for (int target : out.target_uncovered) {
    for (int pred : cfg.pre_dominants[static_cast<size_t>(target)]) {
      if (!covered.test(pred)) continue;
      if (reach_probability(dtmc, pred, init_block) > k_prime) continue;
      targets_by_block[static_cast<size_t>(pred)].push_back(target);
    }
  }
  for (int b = 0; b < cfg.block_count; ++b) {
    if (targets_by_block[static_cast<size_t>(b)].empty()) continue;
    out.critical.push_back(b);
    out.target_of.push_back(std::move(targets_by_block[static_cast<size_t>(b)]));
  }
  return out;
}

std::string rewards_csv(const Cfg& cfg, const BlockBitset& covered, const RewardVector& rewards,
                        const Dtmc& dtmc, int init_block, const CriticalSelection& selection) {
  std::ostringstream out;
  out << "block_id,covered,reward,reach_probability,is_critical\n";
  for (int b = 0; b < cfg.block_count; ++b) {
    bool is_critical = std::binary_search(selection.critical.begin(), selection.critical.end(), b);
    out << cfg.ids[static_cast<size_t>(b)] << ',' << (covered.test(b) ? 1 : 0) << ','
        << rewards.reward[static_cast<size_t>(b)] << ','
        << reach_probability(dtmc, b, init_block) << ',' << (is_critical ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace heatfuzz
