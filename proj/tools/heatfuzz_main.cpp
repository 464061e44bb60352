#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "heatfuzz/attention.hpp"
#include "heatfuzz/config.hpp"
#include "heatfuzz/coverage.hpp"
#include "heatfuzz/markov.hpp"
#include "heatfuzz/orchestrator.hpp"
#include "heatfuzz/target.hpp"

namespace fs = std::filesystem;
using namespace heatfuzz;

namespace {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

Bytes read_binary_file(const std::string& path) {
  std::string text = read_text_file(path);
  return Bytes(text.begin(), text.end());
}

TargetProgram load_target(const std::string& path) {
  return parse_target(read_text_file(path));
}

std::vector<Bytes> load_corpus(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<Bytes> corpus;
  corpus.reserve(files.size());
  for (const auto& file : files) corpus.push_back(read_binary_file(file.string()));
  return corpus;
}

// Saved campaign directory (target copy, config echo, seeds, records).
struct CampaignDir {
  fs::path dir;
  TargetProgram program;
  FuzzerConfig config;
  TokenDictionary dict;
  std::vector<Bytes> seed_bytes;
  std::vector<ExecutionRecord> records;

  static CampaignDir load(const std::string& path, bool with_records) {
    CampaignDir out;
    out.dir = path;
    out.program = parse_target(read_text_file((out.dir / "target.tgt").string()));
    out.config = FuzzerConfig::parse(read_text_file((out.dir / "config.txt").string()));
    if (fs::exists(out.dir / "tokens.dict"))
      out.dict = TokenDictionary::parse(read_text_file((out.dir / "tokens.dict").string()));
    std::vector<std::pair<int, fs::path>> seeds;
    for (const auto& entry : fs::directory_iterator(out.dir / "seeds")) {
      std::string name = entry.path().filename().string();
      if (name.rfind("seed_", 0) != 0) continue;
      int id = std::stoi(name.substr(5, name.size() - 5 - 4));
      seeds.emplace_back(id, entry.path());
    }
    std::sort(seeds.begin(), seeds.end());
    for (const auto& [id, file] : seeds) {
      if (static_cast<size_t>(id) != out.seed_bytes.size())
        throw std::runtime_error("seed files are not contiguous in '" + path + "'");
      out.seed_bytes.push_back(read_binary_file(file.string()));
    }
    if (with_records)
      out.records = RecordStore::load((out.dir / "records.log").string(),
                                      out.program.block_count());
    return out;
  }
};

GlobalCoverage load_counts(const fs::path& dir, const TargetProgram& program) {
  GlobalCoverage gc(program.block_count());
  std::ifstream in(dir / "counts.csv");
  if (!in) throw std::runtime_error("missing counts.csv in '" + dir.string() + "'");
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string type, a, b, count;
    std::getline(row, type, ',');
    std::getline(row, a, ',');
    std::getline(row, b, ',');
    std::getline(row, count, ',');
    if (type == "block") {
      int block = program.index_of(a);
      if (block < 0) throw std::runtime_error("counts.csv names unknown block '" + a + "'");
      if (b == "1") gc.mark_covered(block);
    } else if (type == "edge") {
      int from = program.index_of(a);
      int to = program.index_of(b);
      if (from < 0 || to < 0) throw std::runtime_error("counts.csv names unknown edge");
      gc.add_edge_count(from, to, std::stoull(count));
    }
  }
  return gc;
}

int cmd_fuzz(const std::string& target_path, const std::string& corpus_dir,
             const std::string& out_dir, const std::string& mode, bool seed_set, uint64_t seed,
             int64_t max_execs, const std::string& config_path, const std::string& dict_path) {
  FuzzerConfig config;
  if (!config_path.empty()) config = FuzzerConfig::load_file(config_path);
  if (!mode.empty()) config.mode = mode_from_name(mode);
  if (seed_set) config.rng_seed = seed;
  if (max_execs >= 0) config.max_execs = static_cast<uint64_t>(max_execs);
  if (!dict_path.empty()) config.dict_path = dict_path;

  TargetProgram program = load_target(target_path);
  std::vector<Bytes> corpus = load_corpus(corpus_dir);
  TokenDictionary dict;
  if (!config.dict_path.empty()) dict = TokenDictionary::load_file(config.dict_path);

  fs::create_directories(out_dir);
  fs::path log_path = fs::path(out_dir) / "records.log";
  if (fs::exists(log_path)) fs::remove(log_path);

  CampaignResult result = run_campaign(config, program, corpus, dict, log_path.string());

  std::ofstream(fs::path(out_dir) / "target.tgt", std::ios::binary) << result.target_source;
  std::ofstream(fs::path(out_dir) / "config.txt", std::ios::binary) << config.serialize();
  if (!dict.empty())
    std::ofstream(fs::path(out_dir) / "tokens.dict", std::ios::binary) << dict.serialize();
  export_stats(result, program, out_dir);

  std::cout << campaign_report_text(result);
  return 0;
}

int cmd_rewards(const std::string& out_dir) {
  CampaignDir campaign = CampaignDir::load(out_dir, false);
  GlobalCoverage gc = load_counts(campaign.dir, campaign.program);
  Cfg cfg = build_cfg(campaign.program);
  for (const auto& [from, to] : gc.covered_edges())
    if (!cfg.has_edge(from, to)) cfg.add_dynamic_edge(from, to);
  Dtmc dtmc = estimate_dtmc(gc, cfg);
  RewardVector rewards = solve_rewards(dtmc, gc.covered());
  CriticalSelection selection =
      select_critical_blocks(rewards, gc.covered(), cfg, dtmc, campaign.program.init_index(),
                             campaign.config.k_percent, campaign.config.k_prime);
  std::string csv = rewards_csv(cfg, gc.covered(), rewards, dtmc, campaign.program.init_index(),
                                selection);
  std::ofstream(campaign.dir / "rewards.csv", std::ios::binary) << csv;
  std::cout << csv;
  return 0;
}

int cmd_train(const std::string& out_dir, const std::string& block_id) {
  CampaignDir campaign = CampaignDir::load(out_dir, true);
  int block = campaign.program.index_of(block_id);
  if (block < 0) throw std::runtime_error("unknown block '" + block_id + "'");
  TrainConfig train_config = campaign.config.train;
  train_config.rng_seed = campaign.config.rng_seed ^ 0x747261696eULL;
  train_config.max_input_len = std::min(train_config.max_input_len, campaign.config.max_input_len);
  Rng rng(campaign.config.rng_seed ^ 0x616e616c79ULL);
  auto dataset = build_dataset(campaign.records, campaign.seed_bytes, campaign.dict, block,
                               train_config, rng);
  auto [params, metrics] = train(dataset, train_config);
  fs::create_directories(campaign.dir / "models");
  std::string model_path = (campaign.dir / "models" / ("model_" + block_id + ".bin")).string();
  save_model(params, model_path);
  std::cout << "block: " << block_id << "\n"
            << "samples: " << dataset.size() << "\n"
            << "train_accuracy: " << metrics.train_accuracy << "\n"
            << "holdout_accuracy: " << metrics.holdout_accuracy << "\n"
            << "model: " << model_path << "\n";
  return 0;
}

int cmd_heatmap(const std::string& out_dir, int seed_id, const std::string& mutator_str,
                std::string block_id) {
  CampaignDir campaign = CampaignDir::load(out_dir, true);
  MutatorId mutator = mutator_from_name(mutator_str);
  fs::path models_dir = campaign.dir / "models";
  if (block_id.empty()) {
    std::vector<std::string> found;
    if (fs::exists(models_dir))
      for (const auto& entry : fs::directory_iterator(models_dir)) {
        std::string name = entry.path().filename().string();
        if (name.rfind("model_", 0) == 0 && name.size() > 10)
          found.push_back(name.substr(6, name.size() - 10));
      }
    if (found.empty()) throw std::runtime_error("no trained model in '" + out_dir + "'");
    if (found.size() > 1)
      throw std::runtime_error("several models present; pass --block to pick one");
    block_id = found[0];
  }
  ModelParams params = load_model((models_dir / ("model_" + block_id + ".bin")).string());
  if (seed_id < 0 || static_cast<size_t>(seed_id) >= campaign.seed_bytes.size())
    throw std::runtime_error("unknown seed id " + std::to_string(seed_id));
  auto map = extract_heatmap(params, campaign.records, campaign.seed_bytes, campaign.dict,
                             seed_id, mutator);
  if (!map)
    throw std::runtime_error("no single-site records for seed " + std::to_string(seed_id) +
                             " under mutator " + mutator_str);
  std::string csv = heatmap_csv(*map);
  std::string name = "heatmap_" + std::to_string(seed_id) + "_" + mutator_str + ".csv";
  std::ofstream(campaign.dir / name, std::ios::binary) << csv;
  std::cout << csv;
  return 0;
}

int cmd_replay(const std::string& target_path, const std::string& input_path) {
  TargetProgram program = load_target(target_path);
  Bytes input = read_binary_file(input_path);
  ExecutionTrace trace = execute(program, input);
  std::cout << "trace:";
  for (const std::string& id : trace.block_ids(program)) std::cout << ' ' << id;
  std::cout << "\ncrashed: " << (trace.crashed ? 1 : 0) << "\n";
  const char* reason = trace.termination == Termination::CrashBlock      ? "crash-block"
                       : trace.termination == Termination::StepLimit     ? "step-limit"
                                                                         : "no-matching-guard";
  std::cout << "termination: " << reason << "\n";
  return 0;
}

int cmd_stats(const std::string& out_dir) {
  fs::path dir(out_dir);
  if (!fs::exists(dir / "report.txt"))
    throw std::runtime_error("no report.txt in '" + out_dir + "' (run fuzz first)");
  std::cout << read_text_file((dir / "report.txt").string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coverage-guided fuzzer with reward-directed attention guidance"};
  app.require_subcommand(1);

  std::string target_path, corpus_dir, out_dir, mode, config_path, dict_path, input_path;
  std::string block_id, mutator_str;
  uint64_t seed = 0;
  int64_t max_execs = -1;
  int seed_id = 0;

  CLI::App* fuzz = app.add_subcommand("fuzz", "run a fuzzing campaign");
  fuzz->add_option("--target", target_path, "target program (.tgt)")->required();
  fuzz->add_option("--corpus", corpus_dir, "directory of initial inputs")->required();
  fuzz->add_option("--out", out_dir, "campaign output directory")->required();
  fuzz->add_option("--mode", mode, "attuzz or baseline");
  fuzz->add_option("--seed", seed, "campaign rng seed");
  fuzz->add_option("--max-execs", max_execs, "mutation-execution budget");
  fuzz->add_option("--config", config_path, "key = value config file");
  fuzz->add_option("--dict", dict_path, "token dictionary file");

  CLI::App* rewards = app.add_subcommand("rewards", "recompute block rewards for a campaign");
  rewards->add_option("--out", out_dir, "campaign output directory")->required();

  CLI::App* train_cmd = app.add_subcommand("train", "train the classifier for one block");
  train_cmd->add_option("--out", out_dir, "campaign output directory")->required();
  train_cmd->add_option("--block", block_id, "target block id")->required();

  CLI::App* heatmap = app.add_subcommand("heatmap", "export one (seed, mutator) heat map");
  heatmap->add_option("--out", out_dir, "campaign output directory")->required();
  heatmap->add_option("--seed-id", seed_id, "seed id")->required();
  heatmap->add_option("--mutator", mutator_str, "mutator name")->required();
  heatmap->add_option("--block", block_id, "block whose model to use");

  CLI::App* replay = app.add_subcommand("replay", "execute one input and print the trace");
  replay->add_option("--target", target_path, "target program (.tgt)")->required();
  replay->add_option("--input", input_path, "input file")->required();

  CLI::App* stats = app.add_subcommand("stats", "print the campaign report");
  stats->add_option("--out", out_dir, "campaign output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(fuzz))
      return cmd_fuzz(target_path, corpus_dir, out_dir, mode, fuzz->count("--seed") > 0, seed,
                      max_execs, config_path, dict_path);
    if (app.got_subcommand(rewards)) return cmd_rewards(out_dir);
    if (app.got_subcommand(train_cmd)) return cmd_train(out_dir, block_id);
    if (app.got_subcommand(heatmap)) return cmd_heatmap(out_dir, seed_id, mutator_str, block_id);
    if (app.got_subcommand(replay)) return cmd_replay(target_path, input_path);
    if (app.got_subcommand(stats)) return cmd_stats(out_dir);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
