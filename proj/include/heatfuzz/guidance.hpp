#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "heatfuzz/attention.hpp"
#include "heatfuzz/mutation.hpp"
#include "heatfuzz/rng.hpp"

namespace heatfuzz {

inline constexpr double kDefaultPHot = 0.05;

// Per-mutator hot-byte info for one seed. A position is hot when its heat
// strictly exceeds the seed's mean heat for that mutator; hot positions are
// mutated only with probability p_hot_mutate.
struct MutatorPlan {
  std::set<int> hot_set;
  double threshold = 0.0;  // mean heat over valid positions, exactly
};

struct GuidancePlan {
  int seed_id = -1;
  double p_hot_mutate = kDefaultPHot;
  std::map<int, MutatorPlan> per_mutator;  // keyed by mutator code

  bool empty() const { return per_mutator.empty(); }
  const MutatorPlan* plan_for(MutatorId mutator) const;
  bool is_hot(MutatorId mutator, int position) const;
};

// Union semantics across covered critical blocks: a byte is protected as soon
// as it is hot for at least one of them. `heatmaps_per_critical` holds, for
// each covered critical block, that block-model's heat maps for this seed.
GuidancePlan compute_plan(const std::vector<std::vector<HeatMap>>& heatmaps_per_critical,
                          int seed_id, double p_hot = kDefaultPHot);

// True always for unprotected positions; protected positions pass with
// probability p_hot_mutate.
bool should_mutate_position(const GuidancePlan& plan, MutatorId mutator, int position, Rng& rng);

// Deterministic schedule filtered by should_mutate_position. The skip
// decision is drawn once per (mutator, position) group, covering all of that
// position's parameters; mutators without heat maps pass through unfiltered.
class GuidedMutationStream {
 public:
  GuidedMutationStream(size_t seed_len, const TokenDictionary& dict, const GuidancePlan& plan,
                       Rng& rng);

  std::optional<Mutation> next();

 private:
  DeterministicSchedule schedule_;
  const GuidancePlan* plan_;
  Rng* rng_;
  int decided_mutator_ = -1;
  int decided_position_ = -1;
  bool decision_ = true;
};

std::vector<Mutation> collect_guided_stream(size_t seed_len, const TokenDictionary& dict,
                                            const GuidancePlan& plan, Rng& rng);

// Seeds whose recorded coverage intersects `critical` come first (more
// covered criticals first, ties by older entry), the rest keep pool order.
// Returns indices into the pool.
std::vector<size_t> schedule_seeds(const std::vector<BlockBitset>& pool_coverage,
                                   const std::vector<int>& critical);

// Audit dump: mutator, position, heat, threshold, protected(0/1).
std::string plan_csv(const GuidancePlan& plan,
                     const std::vector<std::vector<HeatMap>>& heatmaps_per_critical);

}  // namespace heatfuzz
