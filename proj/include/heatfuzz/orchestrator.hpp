#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "heatfuzz/config.hpp"
#include "heatfuzz/coverage.hpp"
#include "heatfuzz/guidance.hpp"
#include "heatfuzz/markov.hpp"
#include "heatfuzz/target.hpp"

namespace heatfuzz {

struct SeedEntry {
  int seed_id = 0;
  int parent_seed = -1;  // -1 for initial corpus entries
  Bytes bytes;
  BlockBitset covered_blocks;
  uint64_t discovery_exec = 0;
};

struct CoverageHistoryRow {
  uint64_t exec_count = 0;
  uint64_t covered_edges = 0;
  int covered_blocks = 0;
};

struct WindowStats {
  uint64_t end_exec = 0;           // total executions at the window end
  uint64_t generated = 0;          // mutation executions inside the window
  uint64_t covering_critical = 0;  // of those, how many covered a critical block
  std::vector<uint64_t> per_block_covering;  // how many covered each block
  bool bottleneck = false;

  double critical_ratio() const {
    return generated == 0 ? 0.0 : static_cast<double>(covering_critical) / double(generated);
  }
};

struct CrashReport {
  int crash_block = -1;
  Bytes input;
  uint64_t exec_id = 0;
  int parent_seed = -1;
  std::vector<Mutation> mutations;
};

// Operation counters; baseline campaigns must leave the analysis counters at
// zero.
struct OpCounters {
  uint64_t dtmc_estimates = 0;
  uint64_t reward_solves = 0;
  uint64_t critical_selections = 0;
  uint64_t datasets_built = 0;
  uint64_t models_trained = 0;
  uint64_t heatmaps_extracted = 0;
  uint64_t plans_computed = 0;

  uint64_t analysis_total() const {
    return dtmc_estimates + reward_solves + critical_selections + datasets_built +
           models_trained + heatmaps_extracted + plans_computed;
  }
};

enum class TerminationReason { Budget, CoverageComplete };

struct CampaignResult {
  FuzzerConfig config;
  std::string target_source;
  std::vector<std::string> block_ids;

  std::vector<SeedEntry> pool;
  std::vector<CrashReport> crashes;
  uint64_t duplicate_crashes = 0;
  uint64_t anomalies = 0;

  std::vector<CoverageHistoryRow> history;  // initial row + one per window
  std::vector<WindowStats> windows;
  uint64_t total_execs = 0;     // corpus + mutations
  uint64_t mutation_execs = 0;  // counted against the budget
  TerminationReason termination = TerminationReason::Budget;

  std::optional<uint64_t> activation_exec;  // first pipeline activation
  uint64_t pipeline_runs = 0;
  std::vector<int> critical_blocks;  // latest selection
  std::optional<RewardVector> rewards;
  std::optional<Dtmc> dtmc;
  std::optional<CriticalSelection> selection;

  std::map<int, ModelParams> models;          // per critical block
  std::map<int, TrainMetrics> model_metrics;  // per critical block
  std::map<int, GuidancePlan> plans;          // per seed id
  // Heat maps behind each plan, grouped per covered critical block.
  std::map<int, std::vector<std::vector<HeatMap>>> plan_heatmaps;

  std::vector<ExecutionRecord> det_records;  // single-site records (training data)
  std::vector<ExecutionRecord> all_records;  // only with keep_all_records

  OpCounters counters;

  int covered_block_count = 0;
  uint64_t covered_edge_count = 0;
  BlockBitset covered;
  std::vector<uint8_t> bitmap_bytes;
  // Final transition counts, exported so analyses can rerun without replay.
  std::vector<std::tuple<int, int, uint64_t>> edge_counts;
  std::vector<uint64_t> block_hits;

  std::vector<Bytes> seed_bytes() const;
};

// True iff relative edge growth over the last window fell below delta.
bool detect_bottleneck(const std::vector<CoverageHistoryRow>& history, uint64_t window_execs,
                       double delta);

class Orchestrator {
 public:
  Orchestrator(FuzzerConfig config, const TargetProgram& program, std::vector<Bytes> corpus,
               TokenDictionary dict, std::string record_log_path = "");

  CampaignResult run();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

CampaignResult run_campaign(const FuzzerConfig& config, const TargetProgram& program,
                            const std::vector<Bytes>& corpus, const TokenDictionary& dict,
                            const std::string& record_log_path = "");

// Writes coverage.csv, critical_ratio.csv, report.txt, bitmap.bin, seeds/,
// crashes/ and, when the pipeline ran, rewards.csv, models/, heat-map and
// plan CSVs.
void export_stats(const CampaignResult& result, const TargetProgram& program,
                  const std::string& out_dir);

std::string campaign_report_text(const CampaignResult& result);

}  // namespace heatfuzz
