#include "heatfuzz/orchestrator.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace heatfuzz {

namespace fs = std::filesystem;

std::vector<Bytes> CampaignResult::seed_bytes() const {
  std::vector<Bytes> out;
  out.reserve(pool.size());
  for (const auto& entry : pool) out.push_back(entry.bytes);
  return out;
}

bool detect_bottleneck(const std::vector<CoverageHistoryRow>& history, uint64_t window_execs,
                       double delta) {
  (void)window_execs;  // rows are recorded one window apart
  if (history.empty()) throw std::invalid_argument("empty coverage history");
  if (history.size() < 2) return false;
  const CoverageHistoryRow& prev = history[history.size() - 2];
  const CoverageHistoryRow& now = history.back();
  double base = static_cast<double>(std::max<uint64_t>(prev.covered_edges, 1));
  double growth = static_cast<double>(now.covered_edges - prev.covered_edges) / base;
  return growth < delta;
}

namespace {

BlockBitset blocks_of_trace(const ExecutionTrace& trace, int block_count) {
  BlockBitset covered(block_count);
  for (int block : trace.block_seq) covered.set(block);
  return covered;
}

}  // namespace

struct Orchestrator::Impl {
  FuzzerConfig config;
  const TargetProgram* program;
  std::vector<Bytes> corpus;
  TokenDictionary dict;
  Cfg cfg;

  Rng rng_setup;
  Rng rng_mut;
  Rng rng_analysis;

  GlobalCoverage gc;
  CoverageBitmap bitmap;
  std::unique_ptr<EdgeHashDict> ehd;
  std::unique_ptr<RecordStore> store;

  CampaignResult result;

  std::vector<size_t> schedule;
  size_t cursor = 0;
  bool active = false;
  std::set<int> crash_blocks_seen;
  bool done = false;

  uint64_t window_generated = 0;
  uint64_t window_covering = 0;
  std::vector<uint64_t> window_block_cover;

  std::vector<uint64_t> det_count_per_seed;
  std::vector<int> plan_criticals;
  size_t reschedule_count = 0;
  size_t priority_count = 0;  // schedule prefix covering a critical block

  Impl(FuzzerConfig cfg_in, const TargetProgram& program_in, std::vector<Bytes> corpus_in,
       TokenDictionary dict_in, std::string record_log_path)
      : config(std::move(cfg_in)),
        program(&program_in),
        corpus(std::move(corpus_in)),
        dict(std::move(dict_in)),
        cfg(build_cfg(program_in)),
        rng_setup(config.rng_seed),
        rng_mut(Rng(config.rng_seed ^ 0x6d7574616e74ULL)),
        rng_analysis(Rng(config.rng_seed ^ 0x616e616c79ULL)),
        gc(program_in.block_count()),
        bitmap(config.map_size) {
    ehd = std::make_unique<EdgeHashDict>(cfg, config.map_size, rng_setup);
    if (!record_log_path.empty()) store = std::make_unique<RecordStore>(record_log_path);
    window_block_cover.assign(static_cast<size_t>(program_in.block_count()), 0);
    result.config = config;
    result.target_source = serialize_target(program_in);
    result.block_ids = cfg.ids;
  }

  const GuidancePlan* plan_for_seed(int seed_id) const {
    if (!active) return nullptr;
    auto it = result.plans.find(seed_id);
    return it == result.plans.end() ? nullptr : &it->second;
  }

  void add_seed(int parent, Bytes bytes, const BlockBitset& covered, uint64_t exec_id) {
    SeedEntry entry;
    entry.seed_id = static_cast<int>(result.pool.size());
    entry.parent_seed = parent;
    entry.bytes = std::move(bytes);
    entry.covered_blocks = covered;
    entry.discovery_exec = exec_id;
    result.pool.push_back(std::move(entry));
    det_count_per_seed.push_back(0);
    schedule.push_back(result.pool.size() - 1);
  }

  void triage(const ExecutionTrace& trace, const Bytes& input, int parent,
              const std::vector<Mutation>& mutations, uint64_t exec_id) {
    int crash_block = trace.block_seq.back();
    if (crash_blocks_seen.count(crash_block)) {
      ++result.duplicate_crashes;
      return;
    }
    ExecutionTrace replay = execute(*program, input, config.step_limit);
    if (!replay.crashed) {
      ++result.anomalies;
      return;
    }
    crash_blocks_seen.insert(crash_block);
    CrashReport report;
    report.crash_block = crash_block;
    report.input = input;
    report.exec_id = exec_id;
    report.parent_seed = parent;
    report.mutations = mutations;
    result.crashes.push_back(std::move(report));
  }

  // Runs one mutated input. Returns true when the caller must restart its
  // round (a window boundary rescheduled the pool).
  bool run_one(size_t parent_index, const Bytes& input, const std::vector<Mutation>& mutations,
               int record_position) {
    ExecutionTrace trace = execute(*program, input, config.step_limit);
    ++result.total_execs;
    ++result.mutation_execs;
    bool new_cov = gc.update_from_trace(trace, &bitmap, ehd.get());
    BlockBitset covered = blocks_of_trace(trace, program->block_count());

    ExecutionRecord record;
    record.exec_id = result.total_execs;
    record.parent_seed = result.pool[parent_index].seed_id;
    record.mutator = static_cast<int>(mutations.front().mutator);
    record.param = mutations.front().param;
    record.position = record_position;
    record.input_len = static_cast<int>(input.size());
    record.covered_blocks = covered;
    record.new_coverage = new_cov;
    record.crashed = trace.crashed;
    if (store) store->append(record);
    if (record_position >= 0) {
      ++det_count_per_seed[parent_index];
      // In-memory retention feeds training; the streamed log keeps everything.
      constexpr size_t kDetRetention = 500000;
      if (result.det_records.size() < kDetRetention) result.det_records.push_back(record);
    } else if (config.keep_all_records) {
      result.all_records.push_back(std::move(record));
    }

    ++window_generated;
    bool hits_critical = false;
    for (int block = 0; block < program->block_count(); ++block) {
      if (!covered.test(block)) continue;
      ++window_block_cover[static_cast<size_t>(block)];
      if (!hits_critical &&
          std::binary_search(result.critical_blocks.begin(), result.critical_blocks.end(), block))
        hits_critical = true;
    }
    if (hits_critical) ++window_covering;

    if (trace.crashed) {
      triage(trace, input, result.pool[parent_index].seed_id, mutations, result.total_execs);
    } else if (new_cov) {
      add_seed(result.pool[parent_index].seed_id, input, covered, result.total_execs);
    }

    if (result.mutation_execs % config.window_execs == 0) return on_window_boundary();
    return false;
  }

  void push_window_stats(bool bottleneck) {
    WindowStats stats;
    stats.end_exec = result.total_execs;
    stats.generated = window_generated;
    stats.covering_critical = window_covering;
    stats.per_block_covering = window_block_cover;
    stats.bottleneck = bottleneck;
    result.windows.push_back(std::move(stats));
    window_generated = 0;
    window_covering = 0;
    std::fill(window_block_cover.begin(), window_block_cover.end(), 0);
  }

  bool on_window_boundary() {
    result.history.push_back(
        {result.total_execs, gc.distinct_edge_count(), gc.covered_block_count()});
    bool bottleneck =
        detect_bottleneck(result.history, config.window_execs, config.bottleneck_delta);
    push_window_stats(bottleneck);
    if (config.mode == FuzzMode::Attuzz && bottleneck) run_pipeline();
    if (done) return true;
    if (active) {
      reschedule();
      return true;
    }
    return false;
  }

  void reschedule() {
    std::vector<BlockBitset> coverage;
    coverage.reserve(result.pool.size());
    for (const auto& entry : result.pool) coverage.push_back(entry.covered_blocks);
    schedule = schedule_seeds(coverage, result.critical_blocks);
    // Rotate within the prioritized class so every critical-covering seed
    // contributes records, not just the front one.
    size_t covering = 0;
    for (size_t index : schedule) {
      bool hits = false;
      for (int block : result.critical_blocks)
        hits = hits || result.pool[index].covered_blocks.test(block);
      if (!hits) break;
      ++covering;
    }
    priority_count = covering;
    cursor = covering > 0 ? reschedule_count % covering : 0;
    ++reschedule_count;
  }

  void run_pipeline() {
    ++result.pipeline_runs;
    if (!result.activation_exec) result.activation_exec = result.total_execs;

    // Complete the static CFG with any dynamically observed transition before
    // estimating probabilities (indirect-control analogue; a no-op for
    // interpreter targets).
    for (const auto& [from, to] : gc.covered_edges())
      if (!cfg.has_edge(from, to)) cfg.add_dynamic_edge(from, to);

    Dtmc dtmc = estimate_dtmc(gc, cfg);
    ++result.counters.dtmc_estimates;
    RewardVector rewards = solve_rewards(dtmc, gc.covered());
    ++result.counters.reward_solves;
    CriticalSelection selection =
        select_critical_blocks(rewards, gc.covered(), cfg, dtmc, program->init_index(),
                               config.k_percent, config.k_prime);
    ++result.counters.critical_selections;
    result.dtmc = dtmc;
    result.rewards = rewards;
    result.selection = selection;

    if (selection.target_uncovered.empty()) {
      if (gc.covered_block_count() == program->block_count()) {
        done = true;
        result.termination = TerminationReason::CoverageComplete;
      }
      return;
    }

    // A critical block stays targeted until its uncovered successor is
    // actually covered; otherwise guided progress raises its reach
    // probability past k' and deselects it before the bottleneck breaks.
    std::vector<int> merged = selection.critical;
    for (int block : result.critical_blocks) {
      bool still_blocking = false;
      for (int succ : cfg.successors[static_cast<size_t>(block)])
        still_blocking = still_blocking || !gc.covered().test(succ);
      if (still_blocking &&
          !std::binary_search(merged.begin(), merged.end(), block))
        merged.insert(std::lower_bound(merged.begin(), merged.end(), block), block);
    }
    result.critical_blocks = merged;

    std::vector<Bytes> seeds = result.seed_bytes();
    TrainConfig train_config = config.train;
    train_config.rng_seed = config.rng_seed ^ 0x747261696eULL;
    train_config.max_input_len = std::min(train_config.max_input_len, config.max_input_len);
    for (int block : result.critical_blocks) {
      if (result.models.count(block)) continue;  // trained once per campaign
      try {
        auto dataset =
            build_dataset(result.det_records, seeds, dict, block, train_config, rng_analysis);
        ++result.counters.datasets_built;
        auto [params, metrics] = train(dataset, train_config);
        ++result.counters.models_trained;
        result.models.emplace(block, std::move(params));
        result.model_metrics.emplace(block, std::move(metrics));
      } catch (const UntrainableBlock&) {
        // Single-class data so far; later windows may fix that.
      } catch (const std::invalid_argument&) {
        // Not enough balanced samples yet.
      }
    }

    bool criticals_changed = plan_criticals != result.critical_blocks;
    for (const auto& entry : result.pool) {
      std::vector<int> covered_criticals;
      for (int block : result.critical_blocks)
        if (result.models.count(block) && entry.covered_blocks.test(block))
          covered_criticals.push_back(block);
      if (covered_criticals.empty()) {
        result.plans.erase(entry.seed_id);
        continue;
      }
      // Plans stay cached between activations; the guided stream keeps
      // appending records for the same distribution, so re-extracting every
      // window would only burn the training-time budget.
      auto existing = result.plans.find(entry.seed_id);
      if (!criticals_changed && existing != result.plans.end() && !existing->second.empty())
        continue;

      std::vector<std::vector<HeatMap>> heatmaps_per_critical;
      for (int block : covered_criticals) {
        std::vector<HeatMap> maps;
        for (int code = 0; code < kMutatorCount; ++code) {
          auto map = extract_heatmap(result.models.at(block), result.det_records, seeds, dict,
                                     entry.seed_id, static_cast<MutatorId>(code), 4096);
          if (map) {
            maps.push_back(std::move(*map));
            ++result.counters.heatmaps_extracted;
          }
        }
        heatmaps_per_critical.push_back(std::move(maps));
      }
      GuidancePlan plan = compute_plan(heatmaps_per_critical, entry.seed_id, config.p_hot);
      ++result.counters.plans_computed;
      result.plans[entry.seed_id] = std::move(plan);
      result.plan_heatmaps[entry.seed_id] = std::move(heatmaps_per_critical);
    }
    plan_criticals = result.critical_blocks;
    active = true;
  }

  std::pair<Bytes, std::vector<Mutation>> guided_havoc(const Bytes& seed,
                                                       const GuidancePlan* plan) {
    if (!plan || plan->empty()) return havoc_step(seed, rng_mut, dict);
    int count = 1 + static_cast<int>(rng_mut.below(8));
    Bytes out = seed;
    std::vector<Mutation> applied;
    applied.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
      Mutation m = random_mutation(out.size(), rng_mut, dict);
      for (int tries = 0; tries < 8; ++tries) {
        if (should_mutate_position(*plan, m.mutator, m.position, rng_mut)) break;
        m = random_mutation(out.size(), rng_mut, dict);
      }
      out = apply_mutation(out, m, dict);
      applied.push_back(m);
    }
    return {std::move(out), std::move(applied)};
  }

  // One scheduling round for one seed; returns true when interrupted by a
  // reschedule (the caller restarts from the schedule head).
  bool fuzz_round(size_t pool_index) {
    uint64_t round_iters = 0;
    int seed_id = result.pool[pool_index].seed_id;
    const GuidancePlan* round_plan = plan_for_seed(seed_id);
    bool guided_round = round_plan && !round_plan->empty();

    // Every round walks the single-site enumeration first (hot-byte filtered
    // once a plan is installed), then spends the rest of its budget on
    // stacked random mutations.
    {
      Bytes base = result.pool[pool_index].bytes;
      DeterministicSchedule plain(base.size(), dict);
      std::unique_ptr<GuidedMutationStream> guided;
      if (guided_round)
        guided = std::make_unique<GuidedMutationStream>(base.size(), dict, *round_plan, rng_mut);
      for (;;) {
        std::optional<Mutation> m = guided ? guided->next() : plain.next();
        if (!m) break;
        Bytes input = apply_mutation(base, *m, dict);
        bool interrupted = run_one(pool_index, input, {*m}, m->position);
        ++round_iters;
        if (done || result.mutation_execs >= config.max_execs) return interrupted;
        if (interrupted) return true;
        if (round_iters >= config.iter_limit) break;
      }
    }

    while (round_iters < config.iter_limit) {
      const GuidancePlan* plan = plan_for_seed(seed_id);
      auto [input, mutations] = guided_havoc(result.pool[pool_index].bytes, plan);
      bool interrupted = run_one(pool_index, input, mutations, -1);
      ++round_iters;
      if (done || result.mutation_execs >= config.max_execs) return interrupted;
      if (interrupted) return true;
    }
    return false;
  }

  CampaignResult run() {
    if (corpus.empty()) throw std::invalid_argument("initial corpus is empty");
    for (const Bytes& input : corpus) {
      if (input.empty()) throw std::invalid_argument("corpus inputs must be non-empty");
      if (input.size() > static_cast<size_t>(config.max_input_len))
        throw std::invalid_argument("corpus input exceeds max_input_len");
      ExecutionTrace trace = execute(*program, input, config.step_limit);
      ++result.total_execs;
      gc.update_from_trace(trace, &bitmap, ehd.get());
      BlockBitset covered = blocks_of_trace(trace, program->block_count());
      SeedEntry entry;
      entry.seed_id = static_cast<int>(result.pool.size());
      entry.parent_seed = -1;
      entry.bytes = input;
      entry.covered_blocks = covered;
      entry.discovery_exec = result.total_execs;
      result.pool.push_back(std::move(entry));
      det_count_per_seed.push_back(0);
      schedule.push_back(result.pool.size() - 1);
      if (trace.crashed) triage(trace, input, -1, {}, result.total_execs);
    }
    result.history.push_back(
        {result.total_execs, gc.distinct_edge_count(), gc.covered_block_count()});

    while (!done && result.mutation_execs < config.max_execs) {
      if (cursor >= schedule.size()) cursor = 0;
      size_t pool_index = schedule[cursor];
      bool interrupted = fuzz_round(pool_index);
      if (done || result.mutation_execs >= config.max_execs) break;
      if (!interrupted) {
        // While guidance is active, rounds cycle inside the prioritized
        // class; other seeds wait for the next schedule refresh.
        size_t wrap = (active && priority_count > 0) ? priority_count : schedule.size();
        cursor = (cursor + 1) % wrap;
      }
    }

    if (window_generated > 0) {
      result.history.push_back(
          {result.total_execs, gc.distinct_edge_count(), gc.covered_block_count()});
      bool bottleneck =
          detect_bottleneck(result.history, config.window_execs, config.bottleneck_delta);
      push_window_stats(bottleneck);
    }

    result.covered_block_count = gc.covered_block_count();
    result.covered_edge_count = gc.distinct_edge_count();
    result.covered = gc.covered();
    result.bitmap_bytes = bitmap.to_bytes();
    for (const auto& [from, to] : gc.covered_edges())
      result.edge_counts.emplace_back(from, to, gc.edge_taken(from, to));
    for (int b = 0; b < program->block_count(); ++b) result.block_hits.push_back(gc.block_hits(b));
    if (store) store->flush();
    return std::move(result);
  }
};

Orchestrator::Orchestrator(FuzzerConfig config, const TargetProgram& program,
                           std::vector<Bytes> corpus, TokenDictionary dict,
                           std::string record_log_path)
    : impl_(std::make_unique<Impl>(std::move(config), program, std::move(corpus), std::move(dict),
                                   std::move(record_log_path))) {}

CampaignResult Orchestrator::run() { return impl_->run(); }

CampaignResult run_campaign(const FuzzerConfig& config, const TargetProgram& program,
                            const std::vector<Bytes>& corpus, const TokenDictionary& dict,
                            const std::string& record_log_path) {
  Orchestrator orchestrator(config, program, corpus, dict, record_log_path);
  return orchestrator.run();
}

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

std::string campaign_report_text(const CampaignResult& result) {
  std::ostringstream out;
  out << "heatfuzz campaign report\n";
  out << "mode: " << mode_name(result.config.mode) << "\n";
  out << "rng_seed: " << result.config.rng_seed << "\n";
  out << "total_executions: " << result.total_execs << "\n";
  out << "mutation_executions: " << result.mutation_execs << "\n";
  out << "termination: "
      << (result.termination == TerminationReason::Budget ? "budget" : "coverage-complete")
      << "\n";
  out << "covered_blocks: " << result.covered_block_count << "/" << result.block_ids.size()
      << "\n";
  out << "covered_edges: " << result.covered_edge_count << "\n";
  out << "seed_pool: " << result.pool.size() << "\n";
  out << "pipeline_runs: " << result.pipeline_runs << "\n";
  if (result.activation_exec)
    out << "first_activation_exec: " << *result.activation_exec << "\n";
  out << "models_trained: " << result.counters.models_trained << "\n";
  out << "critical_blocks:";
  for (int block : result.critical_blocks)
    out << ' ' << result.block_ids[static_cast<size_t>(block)];
  out << "\n";
  out << "crashes: " << result.crashes.size() << " (duplicates " << result.duplicate_crashes
      << ", anomalies " << result.anomalies << ")\n";
  for (const auto& crash : result.crashes)
    out << "crash_block: " << result.block_ids[static_cast<size_t>(crash.crash_block)]
        << " exec_id: " << crash.exec_id << " parent_seed: " << crash.parent_seed << "\n";
  if (!result.windows.empty()) {
    out << "final_critical_ratio: " << result.windows.back().critical_ratio() << "\n";
  }
  return out.str();
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw std::runtime_error("write failed on '" + path.string() + "'");
}

void write_bytes(const fs::path& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
  if (!out) throw std::runtime_error("write failed on '" + path.string() + "'");
}

}  // namespace

void export_stats(const CampaignResult& result, const TargetProgram& program,
                  const std::string& out_dir) {
  fs::path dir(out_dir);
  fs::create_directories(dir);
  fs::create_directories(dir / "seeds");
  fs::create_directories(dir / "crashes");

  {
    std::ostringstream csv;
    csv << "exec_count,covered_edges,covered_blocks\n";
    for (const auto& row : result.history)
      csv << row.exec_count << ',' << row.covered_edges << ',' << row.covered_blocks << '\n';
    write_file(dir / "coverage.csv", csv.str());
  }
  {
    std::ostringstream csv;
    csv << "end_exec,generated,covering_critical,critical_ratio,bottleneck\n";
    for (const auto& window : result.windows)
      csv << window.end_exec << ',' << window.generated << ',' << window.covering_critical << ','
          << window.critical_ratio() << ',' << (window.bottleneck ? 1 : 0) << '\n';
    write_file(dir / "critical_ratio.csv", csv.str());
  }
  write_file(dir / "report.txt", campaign_report_text(result));
  {
    Bytes bytes(result.bitmap_bytes.begin(), result.bitmap_bytes.end());
    write_bytes(dir / "bitmap.bin", bytes);
  }
  {
    std::ostringstream csv;
    csv << "seed_id,parent_seed,discovery_exec,length,covered_blocks\n";
    for (const auto& entry : result.pool) {
      csv << entry.seed_id << ',' << entry.parent_seed << ',' << entry.discovery_exec << ','
          << entry.bytes.size() << ',' << entry.covered_blocks.to_hex() << '\n';
      write_bytes(dir / "seeds" / ("seed_" + std::to_string(entry.seed_id) + ".bin"),
                  entry.bytes);
    }
    write_file(dir / "seeds" / "seeds.csv", csv.str());
  }
  {
    std::ostringstream csv;
    csv << "crash_block,exec_id,parent_seed,input_file\n";
    for (const auto& crash : result.crashes) {
      std::string name = "crash_" + result.block_ids[static_cast<size_t>(crash.crash_block)] + ".bin";
      csv << result.block_ids[static_cast<size_t>(crash.crash_block)] << ',' << crash.exec_id
          << ',' << crash.parent_seed << ',' << name << '\n';
      write_bytes(dir / "crashes" / name, crash.input);
    }
    write_file(dir / "crashes" / "crashes.csv", csv.str());
  }

  {
    std::ostringstream csv;
    csv << "type,a,b,count\n";
    for (int b = 0; b < program.block_count(); ++b)
      csv << "block," << result.block_ids[static_cast<size_t>(b)] << ','
          << (result.covered.test(b) ? 1 : 0) << ','
          << (static_cast<size_t>(b) < result.block_hits.size() ? result.block_hits[static_cast<size_t>(b)] : 0)
          << '\n';
    for (const auto& [from, to, count] : result.edge_counts)
      csv << "edge," << result.block_ids[static_cast<size_t>(from)] << ','
          << result.block_ids[static_cast<size_t>(to)] << ',' << count << '\n';
    write_file(dir / "counts.csv", csv.str());
  }

  if (result.rewards && result.dtmc && result.selection) {
    Cfg cfg = build_cfg(program);
    write_file(dir / "rewards.csv",
               rewards_csv(cfg, result.covered, *result.rewards, *result.dtmc,
                           program.init_index(), *result.selection));
  }

  if (!result.models.empty()) {
    fs::create_directories(dir / "models");
    for (const auto& [block, params] : result.models)
      save_model(params,
                 (dir / "models" / ("model_" + result.block_ids[static_cast<size_t>(block)] + ".bin"))
                     .string());
  }
  for (const auto& [seed_id, heatmaps] : result.plan_heatmaps) {
    for (const auto& maps : heatmaps) {
      for (const HeatMap& map : maps) {
        std::string name = "heatmap_" + std::to_string(seed_id) + "_" +
                           mutator_name(map.mutator) + ".csv";
        write_file(dir / name, heatmap_csv(map));
      }
    }
    auto plan_it = result.plans.find(seed_id);
    if (plan_it != result.plans.end()) {
      write_file(dir / ("plan_" + std::to_string(seed_id) + ".csv"),
                 plan_csv(plan_it->second, heatmaps));
    }
  }
}

}  // namespace heatfuzz
