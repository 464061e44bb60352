#include "heatfuzz/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace heatfuzz {

const char* mode_name(FuzzMode mode) {
  return mode == FuzzMode::Attuzz ? "attuzz" : "baseline";
}

FuzzMode mode_from_name(const std::string& name) {
  if (name == "attuzz") return FuzzMode::Attuzz;
  if (name == "baseline") return FuzzMode::Baseline;
  throw std::invalid_argument("unknown mode '" + name + "' (expected attuzz or baseline)");
}

namespace {

std::string trim(const std::string& s) {
  size_t begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  size_t end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

uint64_t parse_u64(const std::string& value, const std::string& key) {
  try {
    return std::stoull(value);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad value for " + key + ": '" + value + "'");
  }
}

double parse_double(const std::string& value, const std::string& key) {
  try {
    return std::stod(value);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad value for " + key + ": '" + value + "'");
  }
}

}  // namespace

FuzzerConfig FuzzerConfig::parse(const std::string& text) { return parse(text, FuzzerConfig{}); }

FuzzerConfig FuzzerConfig::load_file(const std::string& path) {
  return load_file(path, FuzzerConfig{});
}

FuzzerConfig FuzzerConfig::parse(const std::string& text, const FuzzerConfig& base) {
  FuzzerConfig config = base;
  std::istringstream stream(text);
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": missing '='");
    std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    if (key == "rng_seed") config.rng_seed = parse_u64(value, key);
    else if (key == "map_size") config.map_size = static_cast<uint32_t>(parse_u64(value, key));
    else if (key == "max_input_len") config.max_input_len = static_cast<int>(parse_u64(value, key));
    else if (key == "iter_limit") config.iter_limit = parse_u64(value, key);
    else if (key == "window_execs") config.window_execs = parse_u64(value, key);
    else if (key == "bottleneck_delta") config.bottleneck_delta = parse_double(value, key);
    else if (key == "k_percent") config.k_percent = parse_double(value, key);
    else if (key == "k_prime") config.k_prime = parse_double(value, key);
    else if (key == "p_hot") config.p_hot = parse_double(value, key);
    else if (key == "mode") config.mode = mode_from_name(value);
    else if (key == "step_limit") config.step_limit = static_cast<int>(parse_u64(value, key));
    else if (key == "max_execs") config.max_execs = parse_u64(value, key);
    else if (key == "dict") config.dict_path = value;
    else if (key == "keep_all_records") config.keep_all_records = parse_u64(value, key) != 0;
    else if (key == "learning_rate") config.train.learning_rate = parse_double(value, key);
    else if (key == "epochs") config.train.epochs = static_cast<int>(parse_u64(value, key));
    else if (key == "batch_size") config.train.batch_size = static_cast<int>(parse_u64(value, key));
    else if (key == "holdout_fraction") config.train.holdout_fraction = parse_double(value, key);
    else if (key == "max_train_samples") config.train.max_samples = static_cast<int>(parse_u64(value, key));
    else if (key == "embed_dim") config.train.embed_dim = static_cast<int>(parse_u64(value, key));
    else if (key == "feature_dim") config.train.feature_dim = static_cast<int>(parse_u64(value, key));
    else throw std::invalid_argument("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  if (config.bottleneck_delta < 0.0 || config.bottleneck_delta > 1.0 ||
      config.p_hot < 0.0 || config.p_hot > 1.0 || config.k_prime <= 0.0 || config.k_prime > 1.0 ||
      config.k_percent <= 0.0 || config.k_percent > 100.0)
    throw std::invalid_argument("config probability/percent field out of range");
  if (config.window_execs < 1) throw std::invalid_argument("window_execs must be >= 1");
  if (config.iter_limit < 1) throw std::invalid_argument("iter_limit must be >= 1");
  if (config.step_limit < 1) throw std::invalid_argument("step_limit must be >= 1");
  if (config.max_input_len < 1) throw std::invalid_argument("max_input_len must be >= 1");
  return config;
}

FuzzerConfig FuzzerConfig::load_file(const std::string& path, const FuzzerConfig& base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), base);
}

std::string FuzzerConfig::serialize() const {
  std::ostringstream out;
  out << "rng_seed = " << rng_seed << '\n'
      << "map_size = " << map_size << '\n'
      << "max_input_len = " << max_input_len << '\n'
      << "iter_limit = " << iter_limit << '\n'
      << "window_execs = " << window_execs << '\n'
      << "bottleneck_delta = " << bottleneck_delta << '\n'
      << "k_percent = " << k_percent << '\n'
      << "k_prime = " << k_prime << '\n'
      << "p_hot = " << p_hot << '\n'
      << "mode = " << mode_name(mode) << '\n'
      << "step_limit = " << step_limit << '\n'
      << "max_execs = " << max_execs << '\n';
  if (!dict_path.empty()) out << "dict = " << dict_path << '\n';
  out << "keep_all_records = " << (keep_all_records ? 1 : 0) << '\n'
      << "learning_rate = " << train.learning_rate << '\n'
      << "epochs = " << train.epochs << '\n'
      << "batch_size = " << train.batch_size << '\n'
      << "holdout_fraction = " << train.holdout_fraction << '\n'
      << "max_train_samples = " << train.max_samples << '\n'
      << "embed_dim = " << train.embed_dim << '\n'
      << "feature_dim = " << train.feature_dim << '\n';
  return out.str();
}

}  // namespace heatfuzz
