#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "heatfuzz/coverage.hpp"
#include "heatfuzz/mutation.hpp"
#include "heatfuzz/rng.hpp"

namespace heatfuzz {

inline constexpr int kPadToken = 256;
inline constexpr int kVocabSize = 257;  // bytes + PAD

struct EncodedSample {
  std::vector<int> tokens;  // length N; byte values, kPadToken past valid_len
  int mutator_token = 0;
  double param_norm = 0.0;  // in [0, 1]
  int label = 0;            // 0/1
  int valid_len = 0;
};

// Normalized parameter feature for a mutation (value in [0, 1]).
double normalize_param(MutatorId mutator, int param, const TokenDictionary& dict);

EncodedSample encode_input(const Bytes& input, MutatorId mutator, int param,
                           const TokenDictionary& dict, int n);

struct ModelDims {
  int n = 0;          // padded sequence length
  int d = 8;          // byte embedding width
  int d_prime = 16;   // extracted feature width
  int mutators = kMutatorCount;

  bool operator==(const ModelDims&) const = default;
};

// All parameters live in one flat vector (checkpoint order). Sections, in
// order: embedding table, three conv layers (weights then bias each),
// attention score head (per-position linear, mutator table + bias, parameter
// scalar map), classifier.
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(ModelDims dims);

  static ModelParams random_init(ModelDims dims, Rng& rng);

  const ModelDims& dims() const { return dims_; }
  std::vector<double>& flat() { return flat_; }
  const std::vector<double>& flat() const { return flat_; }
  size_t parameter_count() const { return flat_.size(); }
  bool all_finite() const;

  // Section offsets into the flat vector.
  size_t embed_off() const { return 0; }
  size_t conv_w_off(int layer) const;
  size_t conv_b_off(int layer) const;
  size_t att_u_w_off() const;
  size_t att_u_b_off() const;
  size_t att_m_off() const;
  size_t att_m_b_off() const;
  size_t att_p_w_off() const;
  size_t att_p_b_off() const;
  size_t cls_w_off() const;
  size_t cls_b_off() const;

 private:
  ModelDims dims_;
  std::vector<double> flat_;
};

struct ForwardResult {
  double logits[2] = {0.0, 0.0};
  std::vector<double> alpha;  // length N, zero at PAD positions
  double loss = 0.0;          // cross-entropy against sample.label
  int predicted = 0;
};

ForwardResult forward(const ModelParams& params, const EncodedSample& sample);

// Cross-entropy loss and its gradient w.r.t. every parameter (same layout as
// the flat vector). Returns the loss.
double loss_and_gradient(const ModelParams& params, const EncodedSample& sample,
                         std::vector<double>& grad);

struct TrainConfig {
  double learning_rate = 0.001;
  int epochs = 60;
  int batch_size = 64;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double holdout_fraction = 0.2;
  uint64_t rng_seed = 1;
  int max_input_len = 256;  // caps the padded length N
  int max_samples = 3000;   // balanced-dataset cap, 0 = unlimited
  int embed_dim = 8;
  int feature_dim = 16;
};

struct TrainMetrics {
  double train_accuracy = 0.0;
  double holdout_accuracy = 0.0;
  std::vector<double> loss_curve;  // mean train loss per epoch
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UntrainableBlock : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Balanced dataset for one target block. Reconstructs each single-site
// mutation against its parent seed, labels by whether the record covered the
// target block, and under-samples the majority class down to the minority.
// Multi-site records (position -1) are excluded. Throws UntrainableBlock when
// only one class is present.
std::vector<EncodedSample> build_dataset(const std::vector<ExecutionRecord>& records,
                                         const std::vector<Bytes>& seed_bytes,
                                         const TokenDictionary& dict, int target_block,
                                         const TrainConfig& config, Rng& rng);

std::pair<ModelParams, TrainMetrics> train(const std::vector<EncodedSample>& dataset,
                                           const TrainConfig& config);

// Max relative error between the analytic gradient and central finite
// differences over `checks` randomly chosen parameters.
double finite_difference_check(const ModelParams& params, const EncodedSample& sample,
                               double epsilon, int checks, Rng& rng);

struct HeatMap {
  int seed_id = 0;
  MutatorId mutator = MutatorId::BitFlip1;
  std::vector<double> heat;  // length N; zero at PAD positions, sums to 1
  int valid_len = 0;

  double mean_over_valid() const;
};

// Mean attention vector over the records of one (seed, mutator) pair.
// Returns nullopt when the pair has no usable records. max_records caps the
// scan for long campaign logs (0 = all).
std::optional<HeatMap> extract_heatmap(const ModelParams& params,
                                       const std::vector<ExecutionRecord>& records,
                                       const std::vector<Bytes>& seed_bytes,
                                       const TokenDictionary& dict, int seed_id,
                                       MutatorId mutator, int max_records = 0);

// Checkpoint: magic, version, N, D, D', mutator count (u32 LE each) followed
// by the flat parameter array as little-endian doubles.
void save_model(const ModelParams& params, const std::string& path);
ModelParams load_model(const std::string& path);

std::string heatmap_csv(const HeatMap& map);

}  // namespace heatfuzz
