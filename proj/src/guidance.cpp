#include "heatfuzz/guidance.hpp"

#include <algorithm>
#include <sstream>

namespace heatfuzz {

const MutatorPlan* GuidancePlan::plan_for(MutatorId mutator) const {
  auto it = per_mutator.find(static_cast<int>(mutator));
  return it == per_mutator.end() ? nullptr : &it->second;
}

bool GuidancePlan::is_hot(MutatorId mutator, int position) const {
  const MutatorPlan* plan = plan_for(mutator);
  return plan && plan->hot_set.count(position) > 0;
}

GuidancePlan compute_plan(const std::vector<std::vector<HeatMap>>& heatmaps_per_critical,
                          int seed_id, double p_hot) {
  GuidancePlan plan;
  plan.seed_id = seed_id;
  plan.p_hot_mutate = p_hot;
  for (const auto& maps : heatmaps_per_critical) {
    for (const HeatMap& map : maps) {
      double threshold = map.mean_over_valid();
      MutatorPlan& mp = plan.per_mutator[static_cast<int>(map.mutator)];
      mp.threshold = threshold;
      for (int i = 0; i < map.valid_len; ++i) {
        if (map.heat[static_cast<size_t>(i)] > threshold) mp.hot_set.insert(i);
      }
    }
  }
  return plan;
}

bool should_mutate_position(const GuidancePlan& plan, MutatorId mutator, int position, Rng& rng) {
  if (!plan.is_hot(mutator, position)) return true;
  return rng.unit() < plan.p_hot_mutate;
}

GuidedMutationStream::GuidedMutationStream(size_t seed_len, const TokenDictionary& dict,
                                           const GuidancePlan& plan, Rng& rng)
    : schedule_(seed_len, dict), plan_(&plan), rng_(&rng) {}

std::optional<Mutation> GuidedMutationStream::next() {
  for (;;) {
    std::optional<Mutation> m = schedule_.next();
    if (!m) return std::nullopt;
    int code = static_cast<int>(m->mutator);
    if (code != decided_mutator_ || m->position != decided_position_) {
      decided_mutator_ = code;
      decided_position_ = m->position;
      decision_ = should_mutate_position(*plan_, m->mutator, m->position, *rng_);
    }
    if (decision_) return m;
  }
}

std::vector<Mutation> collect_guided_stream(size_t seed_len, const TokenDictionary& dict,
                                            const GuidancePlan& plan, Rng& rng) {
  std::vector<Mutation> out;
  GuidedMutationStream stream(seed_len, dict, plan, rng);
  while (auto m = stream.next()) out.push_back(*m);
  return out;
}

std::vector<size_t> schedule_seeds(const std::vector<BlockBitset>& pool_coverage,
                                   const std::vector<int>& critical) {
  std::vector<size_t> order(pool_coverage.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (critical.empty()) return order;
  std::vector<int> hits(pool_coverage.size(), 0);
  for (size_t i = 0; i < pool_coverage.size(); ++i) {
    for (int block : critical)
      if (pool_coverage[i].test(block)) ++hits[i];
  }
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if ((hits[a] > 0) != (hits[b] > 0)) return hits[a] > 0;
    if (hits[a] > 0 && hits[a] != hits[b]) return hits[a] > hits[b];
    if (hits[a] > 0) return a < b;  // ties by older seed id
    return false;  // non-covering seeds keep pool order
  });
  return order;
}

std::string plan_csv(const GuidancePlan& plan,
                     const std::vector<std::vector<HeatMap>>& heatmaps_per_critical) {
  std::ostringstream out;
  out << "mutator,position,heat,threshold,protected\n";
  for (const auto& [code, mp] : plan.per_mutator) {
    MutatorId mutator = static_cast<MutatorId>(code);
    // Report the first critical block's heat map for this mutator (the
    // thresholds of later blocks are folded into the hot set already).
    const HeatMap* map = nullptr;
    for (const auto& maps : heatmaps_per_critical) {
      for (const HeatMap& candidate : maps) {
        if (candidate.mutator == mutator) {
          map = &candidate;
          break;
        }
      }
      if (map) break;
    }
    if (!map) continue;
    for (int i = 0; i < map->valid_len; ++i) {
      out << mutator_name(mutator) << ',' << i << ',' << map->heat[static_cast<size_t>(i)] << ','
          << mp.threshold << ',' << (mp.hot_set.count(i) ? 1 : 0) << '\n';
    }
  }
  return out.str();
}

}  // namespace heatfuzz
