#pragma once

#include <cstdint>
#include <string>

#include "heatfuzz/attention.hpp"

namespace heatfuzz {

enum class FuzzMode { Attuzz, Baseline };

const char* mode_name(FuzzMode mode);
FuzzMode mode_from_name(const std::string& name);

struct FuzzerConfig {
  uint64_t rng_seed = 1;
  uint32_t map_size = 65536;
  int max_input_len = 256;
  uint64_t iter_limit = 50000;     // mutations per seed per scheduling round
  uint64_t window_execs = 100000;  // bottleneck-check window, in executions
  double bottleneck_delta = 0.05;
  double k_percent = 10.0;
  double k_prime = 0.5;
  double p_hot = 0.05;
  FuzzMode mode = FuzzMode::Attuzz;
  int step_limit = 4096;
  uint64_t max_execs = 1000000;  // mutation-execution budget
  std::string dict_path;
  bool keep_all_records = false;  // retain multi-site records in memory too
  TrainConfig train;

  // Line-oriented `key = value` text. Unknown keys are errors.
  static FuzzerConfig parse(const std::string& text);
  static FuzzerConfig parse(const std::string& text, const FuzzerConfig& base);
  static FuzzerConfig load_file(const std::string& path);
  static FuzzerConfig load_file(const std::string& path, const FuzzerConfig& base);
  std::string serialize() const;
};

}  // namespace heatfuzz
