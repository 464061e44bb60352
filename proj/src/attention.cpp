#include "heatfuzz/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace heatfuzz {

double normalize_param(MutatorId mutator, int param, const TokenDictionary& dict) {
  switch (mutator) {
    case MutatorId::BitFlip1: return param / 7.0;
    case MutatorId::ByteFlip: return 0.0;
    case MutatorId::ArithPlus:
    case MutatorId::ArithMinus: return (param - 1) / double(kArithMax - 1);
    case MutatorId::InterestingReplace:
      return param / double(kInterestingBytes.size() - 1);
    case MutatorId::DictionaryReplace:
      return dict.size() > 1 ? param / double(dict.size() - 1) : 0.0;
    case MutatorId::RandomByte: return param / 255.0;
  }
  return 0.0;
}

EncodedSample encode_input(const Bytes& input, MutatorId mutator, int param,
                           const TokenDictionary& dict, int n) {
  EncodedSample sample;
  sample.valid_len = static_cast<int>(std::min<size_t>(input.size(), static_cast<size_t>(n)));
  sample.tokens.assign(static_cast<size_t>(n), kPadToken);
  for (int i = 0; i < sample.valid_len; ++i) sample.tokens[static_cast<size_t>(i)] = input[static_cast<size_t>(i)];
  sample.mutator_token = static_cast<int>(mutator);
  sample.param_norm = normalize_param(mutator, param, dict);
  return sample;
}

// ---------------------------------------------------------------------------
// Parameter layout
// ---------------------------------------------------------------------------

namespace {

size_t conv_weight_count(const ModelDims& dims, int layer) {
  int in = layer == 0 ? dims.d : dims.d_prime;
  return static_cast<size_t>(dims.d_prime) * static_cast<size_t>(in) * 3;
}

size_t total_parameter_count(const ModelDims& dims) {
  size_t n = static_cast<size_t>(kVocabSize) * static_cast<size_t>(dims.d);
  for (int layer = 0; layer < 3; ++layer)
    n += conv_weight_count(dims, layer) + static_cast<size_t>(dims.d_prime);
  n += static_cast<size_t>(dims.d_prime) + 1;         // att_u
  n += static_cast<size_t>(dims.mutators) + 1;        // att_m
  n += 2;                                             // att_p
  n += 2 * static_cast<size_t>(dims.d_prime) * static_cast<size_t>(dims.n) + 2;  // classifier
  return n;
}

}  // namespace

ModelParams::ModelParams(ModelDims dims) : dims_(dims) {
  flat_.assign(total_parameter_count(dims), 0.0);
}

size_t ModelParams::conv_w_off(int layer) const {
  size_t off = static_cast<size_t>(kVocabSize) * static_cast<size_t>(dims_.d);
  for (int l = 0; l < layer; ++l)
    off += conv_weight_count(dims_, l) + static_cast<size_t>(dims_.d_prime);
  return off;
}

size_t ModelParams::conv_b_off(int layer) const {
  return conv_w_off(layer) + conv_weight_count(dims_, layer);
}

size_t ModelParams::att_u_w_off() const { return conv_b_off(2) + static_cast<size_t>(dims_.d_prime); }
size_t ModelParams::att_u_b_off() const { return att_u_w_off() + static_cast<size_t>(dims_.d_prime); }
size_t ModelParams::att_m_off() const { return att_u_b_off() + 1; }
size_t ModelParams::att_m_b_off() const { return att_m_off() + static_cast<size_t>(dims_.mutators); }
size_t ModelParams::att_p_w_off() const { return att_m_b_off() + 1; }
size_t ModelParams::att_p_b_off() const { return att_p_w_off() + 1; }
size_t ModelParams::cls_w_off() const { return att_p_b_off() + 1; }
size_t ModelParams::cls_b_off() const {
  return cls_w_off() + 2 * static_cast<size_t>(dims_.d_prime) * static_cast<size_t>(dims_.n);
}

bool ModelParams::all_finite() const {
  for (double v : flat_)
    if (!std::isfinite(v)) return false;
  return true;
}

ModelParams ModelParams::random_init(ModelDims dims, Rng& rng) {
  ModelParams params(dims);
  auto fill = [&](size_t off, size_t count, int fan_in) {
    double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (size_t i = 0; i < count; ++i)
      params.flat()[off + i] = (2.0 * rng.unit() - 1.0) * s;
  };
  fill(params.embed_off(), static_cast<size_t>(kVocabSize) * dims.d, dims.d);
  // Byte values carry ordinal structure; seed channel 0 with a value ramp so
  // numeric thresholds generalize to byte values unseen in training. The PAD
  // row keeps its random draw.
  {
    double s = 1.0 / std::sqrt(static_cast<double>(dims.d));
    for (int v = 0; v < 256; ++v)
      params.flat()[params.embed_off() + static_cast<size_t>(v) * dims.d] =
          (v / 255.0 * 2.0 - 1.0) * s;
  }
  for (int layer = 0; layer < 3; ++layer) {
    int in = layer == 0 ? dims.d : dims.d_prime;
    fill(params.conv_w_off(layer), conv_weight_count(dims, layer), in * 3);
    // biases start at zero
  }
  fill(params.att_u_w_off(), static_cast<size_t>(dims.d_prime), dims.d_prime);
  fill(params.att_m_off(), static_cast<size_t>(dims.mutators), 1);
  fill(params.att_p_w_off(), 1, 1);
  fill(params.cls_w_off(), 2 * static_cast<size_t>(dims.d_prime) * static_cast<size_t>(dims.n),
       dims.d_prime * dims.n);
  return params;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

namespace {

struct Workspace {
  std::vector<double> embedded;  // D x N
  std::vector<double> h1, h2, u; // D' x N each
  std::vector<double> scores;    // N
  std::vector<double> alpha;     // N

  void resize(const ModelDims& dims) {
    size_t dn = static_cast<size_t>(dims.d) * static_cast<size_t>(dims.n);
    size_t pn = static_cast<size_t>(dims.d_prime) * static_cast<size_t>(dims.n);
    embedded.assign(dn, 0.0);
    h1.assign(pn, 0.0);
    h2.assign(pn, 0.0);
    u.assign(pn, 0.0);
    scores.assign(static_cast<size_t>(dims.n), 0.0);
    alpha.assign(static_cast<size_t>(dims.n), 0.0);
  }
};

// Same-length 1-D convolution, kernel 3, followed by ReLU.
void conv_forward(const double* w, const double* b, const double* in, double* out, int in_ch,
                  int out_ch, int n) {
  for (int o = 0; o < out_ch; ++o) {
    for (int i = 0; i < n; ++i) {
      double acc = b[o];
      const double* wo = w + static_cast<size_t>(o) * in_ch * 3;
      for (int c = 0; c < in_ch; ++c) {
        const double* row = in + static_cast<size_t>(c) * n;
        const double* wc = wo + c * 3;
        if (i > 0) acc += wc[0] * row[i - 1];
        acc += wc[1] * row[i];
        if (i + 1 < n) acc += wc[2] * row[i + 1];
      }
      out[static_cast<size_t>(o) * n + i] = acc > 0.0 ? acc : 0.0;
    }
  }
}

// Gradient through one conv+ReLU layer. d_out is the gradient at the layer
// output (post-ReLU); the ReLU mask comes from out > 0.
void conv_backward(const double* w, const double* in, const double* out, const double* d_out,
                   double* d_w, double* d_b, double* d_in, int in_ch, int out_ch, int n) {
  for (int o = 0; o < out_ch; ++o) {
    const double* wo = w + static_cast<size_t>(o) * in_ch * 3;
    double* dwo = d_w + static_cast<size_t>(o) * in_ch * 3;
    for (int i = 0; i < n; ++i) {
      double g = d_out[static_cast<size_t>(o) * n + i];
      if (g == 0.0 || out[static_cast<size_t>(o) * n + i] <= 0.0) continue;
      d_b[o] += g;
      for (int c = 0; c < in_ch; ++c) {
        const double* row = in + static_cast<size_t>(c) * n;
        double* drow = d_in ? d_in + static_cast<size_t>(c) * n : nullptr;
        const double* wc = wo + c * 3;
        double* dwc = dwo + c * 3;
        if (i > 0) {
          dwc[0] += g * row[i - 1];
          if (drow) drow[i - 1] += g * wc[0];
        }
        dwc[1] += g * row[i];
        if (drow) drow[i] += g * wc[1];
        if (i + 1 < n) {
          dwc[2] += g * row[i + 1];
          if (drow) drow[i + 1] += g * wc[2];
        }
      }
    }
  }
}

struct ForwardState {
  double logits[2];
  double loss;
  int label;
};

// Runs the full forward pass into the workspace; returns logits/loss.
ForwardState run_forward(const ModelParams& params, const EncodedSample& sample, Workspace& ws) {
  const ModelDims& dims = params.dims();
  const int n = dims.n;
  const int d = dims.d;
  const int dp = dims.d_prime;
  const auto& p = params.flat();
  ws.resize(dims);

  for (int i = 0; i < n; ++i) {
    int token = sample.tokens[static_cast<size_t>(i)];
    const double* row = p.data() + params.embed_off() + static_cast<size_t>(token) * d;
    for (int c = 0; c < d; ++c) ws.embedded[static_cast<size_t>(c) * n + i] = row[c];
  }

  conv_forward(p.data() + params.conv_w_off(0), p.data() + params.conv_b_off(0),
               ws.embedded.data(), ws.h1.data(), d, dp, n);
  conv_forward(p.data() + params.conv_w_off(1), p.data() + params.conv_b_off(1), ws.h1.data(),
               ws.h2.data(), dp, dp, n);
  conv_forward(p.data() + params.conv_w_off(2), p.data() + params.conv_b_off(2), ws.h2.data(),
               ws.u.data(), dp, dp, n);

  const int valid = std::min(sample.valid_len, n);
  const double* att_u_w = p.data() + params.att_u_w_off();
  double score_shift = p[params.att_u_b_off()] +
                       p[params.att_m_off() + static_cast<size_t>(sample.mutator_token)] +
                       p[params.att_m_b_off()] + p[params.att_p_w_off()] * sample.param_norm +
                       p[params.att_p_b_off()];
  double max_score = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < valid; ++i) {
    double e = score_shift;
    for (int c = 0; c < dp; ++c) e += att_u_w[c] * ws.u[static_cast<size_t>(c) * n + i];
    ws.scores[static_cast<size_t>(i)] = e;
    max_score = std::max(max_score, e);
  }
  if (valid > 0) {
    double z = 0.0;
    for (int i = 0; i < valid; ++i) {
      double a = std::exp(ws.scores[static_cast<size_t>(i)] - max_score);
      ws.alpha[static_cast<size_t>(i)] = a;
      z += a;
    }
    // Softmax, then the literal renormalization step (identity after softmax).
    double renorm = 0.0;
    for (int i = 0; i < valid; ++i) {
      ws.alpha[static_cast<size_t>(i)] /= z;
      renorm += ws.alpha[static_cast<size_t>(i)];
    }
    for (int i = 0; i < valid; ++i) ws.alpha[static_cast<size_t>(i)] /= renorm;
  }
  for (int i = valid; i < n; ++i) ws.alpha[static_cast<size_t>(i)] = 0.0;

  const double* cls_w = p.data() + params.cls_w_off();
  ForwardState state;
  state.label = sample.label;
  for (int k = 0; k < 2; ++k) {
    double acc = p[params.cls_b_off() + static_cast<size_t>(k)];
    const double* wk = cls_w + static_cast<size_t>(k) * dp * n;
    for (int c = 0; c < dp; ++c) {
      const double* urow = ws.u.data() + static_cast<size_t>(c) * n;
      const double* wrow = wk + static_cast<size_t>(c) * n;
      for (int i = 0; i < valid; ++i) acc += wrow[i] * ws.alpha[static_cast<size_t>(i)] * urow[i];
    }
    state.logits[k] = acc;
  }
  double m = std::max(state.logits[0], state.logits[1]);
  double lse = m + std::log(std::exp(state.logits[0] - m) + std::exp(state.logits[1] - m));
  state.loss = lse - state.logits[sample.label];
  return state;
}

}  // namespace

ForwardResult forward(const ModelParams& params, const EncodedSample& sample) {
  Workspace ws;
  ForwardState state = run_forward(params, sample, ws);
  ForwardResult result;
  result.logits[0] = state.logits[0];
  result.logits[1] = state.logits[1];
  result.alpha = ws.alpha;
  result.loss = state.loss;
  result.predicted = state.logits[1] > state.logits[0] ? 1 : 0;
  return result;
}

double loss_and_gradient(const ModelParams& params, const EncodedSample& sample,
                         std::vector<double>& grad) {
  const ModelDims& dims = params.dims();
  const int n = dims.n;
  const int d = dims.d;
  const int dp = dims.d_prime;
  const auto& p = params.flat();
  if (grad.size() != p.size()) grad.assign(p.size(), 0.0);

  Workspace ws;
  ForwardState state = run_forward(params, sample, ws);
  const int valid = std::min(sample.valid_len, n);

  // d loss / d logits
  double m = std::max(state.logits[0], state.logits[1]);
  double e0 = std::exp(state.logits[0] - m);
  double e1 = std::exp(state.logits[1] - m);
  double d_logits[2] = {e0 / (e0 + e1), e1 / (e0 + e1)};
  d_logits[sample.label] -= 1.0;

  size_t pn = static_cast<size_t>(dp) * static_cast<size_t>(n);
  std::vector<double> d_u(pn, 0.0), d_h2(pn, 0.0), d_h1(pn, 0.0);
  std::vector<double> d_embedded(static_cast<size_t>(d) * n, 0.0);
  std::vector<double> d_w(static_cast<size_t>(n), 0.0);

  // Classifier: logits_k = cls_b_k + sum cls_w[k,c,i] * alpha_i * U[c,i]
  const double* cls_w = p.data() + params.cls_w_off();
  for (int k = 0; k < 2; ++k) {
    double g = d_logits[k];
    grad[params.cls_b_off() + static_cast<size_t>(k)] += g;
    const double* wk = cls_w + static_cast<size_t>(k) * pn;
    double* gwk = grad.data() + params.cls_w_off() + static_cast<size_t>(k) * pn;
    for (int c = 0; c < dp; ++c) {
      const double* urow = ws.u.data() + static_cast<size_t>(c) * n;
      double* durow = d_u.data() + static_cast<size_t>(c) * n;
      for (int i = 0; i < valid; ++i) {
        double a = ws.alpha[static_cast<size_t>(i)];
        gwk[static_cast<size_t>(c) * n + i] += g * a * urow[i];
        durow[i] += g * wk[static_cast<size_t>(c) * n + i] * a;
        d_w[static_cast<size_t>(i)] += g * wk[static_cast<size_t>(c) * n + i] * urow[i];
      }
    }
  }

  // Renormalization W = A / sum(A), with sum(A) = 1 after softmax.
  std::vector<double> d_alpha(static_cast<size_t>(n), 0.0);
  double dot_wa = 0.0;
  for (int i = 0; i < valid; ++i) dot_wa += d_w[static_cast<size_t>(i)] * ws.alpha[static_cast<size_t>(i)];
  for (int i = 0; i < valid; ++i) d_alpha[static_cast<size_t>(i)] = d_w[static_cast<size_t>(i)] - dot_wa;

  // Softmax backward.
  std::vector<double> d_scores(static_cast<size_t>(n), 0.0);
  double dot_aa = 0.0;
  for (int i = 0; i < valid; ++i) dot_aa += d_alpha[static_cast<size_t>(i)] * ws.alpha[static_cast<size_t>(i)];
  for (int i = 0; i < valid; ++i)
    d_scores[static_cast<size_t>(i)] =
        ws.alpha[static_cast<size_t>(i)] * (d_alpha[static_cast<size_t>(i)] - dot_aa);

  // Attention score head.
  const double* att_u_w = p.data() + params.att_u_w_off();
  double de_sum = 0.0;
  for (int i = 0; i < valid; ++i) {
    double de = d_scores[static_cast<size_t>(i)];
    de_sum += de;
    for (int c = 0; c < dp; ++c) {
      grad[params.att_u_w_off() + static_cast<size_t>(c)] += de * ws.u[static_cast<size_t>(c) * n + i];
      d_u[static_cast<size_t>(c) * n + i] += de * att_u_w[c];
    }
  }
  grad[params.att_u_b_off()] += de_sum;
  grad[params.att_m_off() + static_cast<size_t>(sample.mutator_token)] += de_sum;
  grad[params.att_m_b_off()] += de_sum;
  grad[params.att_p_w_off()] += de_sum * sample.param_norm;
  grad[params.att_p_b_off()] += de_sum;

  // Conv stack backward.
  conv_backward(p.data() + params.conv_w_off(2), ws.h2.data(), ws.u.data(), d_u.data(),
                grad.data() + params.conv_w_off(2), grad.data() + params.conv_b_off(2),
                d_h2.data(), dp, dp, n);
  conv_backward(p.data() + params.conv_w_off(1), ws.h1.data(), ws.h2.data(), d_h2.data(),
                grad.data() + params.conv_w_off(1), grad.data() + params.conv_b_off(1),
                d_h1.data(), dp, dp, n);
  conv_backward(p.data() + params.conv_w_off(0), ws.embedded.data(), ws.h1.data(), d_h1.data(),
                grad.data() + params.conv_w_off(0), grad.data() + params.conv_b_off(0),
                d_embedded.data(), d, dp, n);

  for (int i = 0; i < n; ++i) {
    int token = sample.tokens[static_cast<size_t>(i)];
    double* gemb = grad.data() + params.embed_off() + static_cast<size_t>(token) * d;
    for (int c = 0; c < d; ++c) gemb[c] += d_embedded[static_cast<size_t>(c) * n + i];
  }
  return state.loss;
}

// ---------------------------------------------------------------------------
// Dataset construction
// ---------------------------------------------------------------------------

std::vector<EncodedSample> build_dataset(const std::vector<ExecutionRecord>& records,
                                         const std::vector<Bytes>& seed_bytes,
                                         const TokenDictionary& dict, int target_block,
                                         const TrainConfig& config, Rng& rng) {
  struct Raw {
    Bytes input;
    MutatorId mutator;
    int param;
    int label;
  };
  std::vector<size_t> positives, negatives;
  std::vector<Raw> raws;
  raws.reserve(records.size());
  size_t max_len = 0;
  for (const auto& record : records) {
    if (record.position < 0) continue;  // multi-site mutations carry no single heat position
    if (record.parent_seed < 0 || static_cast<size_t>(record.parent_seed) >= seed_bytes.size())
      continue;
    const Bytes& parent = seed_bytes[static_cast<size_t>(record.parent_seed)];
    Mutation m{static_cast<MutatorId>(record.mutator), record.position, record.param};
    Raw raw;
    raw.input = apply_mutation(parent, m, dict);
    raw.mutator = m.mutator;
    raw.param = m.param;
    raw.label = record.covered_blocks.test(target_block) ? 1 : 0;
    max_len = std::max(max_len, raw.input.size());
    (raw.label ? positives : negatives).push_back(raws.size());
    raws.push_back(std::move(raw));
  }
  if (positives.empty() || negatives.empty())
    throw UntrainableBlock("single-class data for block " + std::to_string(target_block));

  auto shuffle_indices = [&](std::vector<size_t>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = rng.below(static_cast<uint32_t>(i));
      std::swap(v[i - 1], v[j]);
    }
  };
  shuffle_indices(positives);
  shuffle_indices(negatives);
  size_t per_class = std::min(positives.size(), negatives.size());
  if (config.max_samples > 0)
    per_class = std::min(per_class, static_cast<size_t>(config.max_samples) / 2);

  int n = static_cast<int>(std::min<size_t>(max_len, static_cast<size_t>(config.max_input_len)));
  std::vector<size_t> chosen;
  chosen.reserve(2 * per_class);
  chosen.insert(chosen.end(), positives.begin(), positives.begin() + static_cast<long>(per_class));
  chosen.insert(chosen.end(), negatives.begin(), negatives.begin() + static_cast<long>(per_class));
  shuffle_indices(chosen);

  std::vector<EncodedSample> dataset;
  dataset.reserve(chosen.size());
  for (size_t index : chosen) {
    const Raw& raw = raws[index];
    EncodedSample sample = encode_input(raw.input, raw.mutator, raw.param, dict, n);
    sample.label = raw.label;
    dataset.push_back(std::move(sample));
  }
  return dataset;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

std::pair<ModelParams, TrainMetrics> train(const std::vector<EncodedSample>& dataset,
                                           const TrainConfig& config) {
  if (dataset.size() < 8) throw std::invalid_argument("dataset too small to train");
  if (config.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (config.holdout_fraction <= 0.0 || config.holdout_fraction >= 1.0)
    throw std::invalid_argument("holdout_fraction must lie in (0, 1)");
  Rng rng(config.rng_seed);

  ModelDims dims;
  dims.n = static_cast<int>(dataset.front().tokens.size());
  dims.d = config.embed_dim;
  dims.d_prime = config.feature_dim;
  ModelParams params = ModelParams::random_init(dims, rng);

  std::vector<size_t> order(dataset.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto shuffle = [&](std::vector<size_t>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = rng.below(static_cast<uint32_t>(i));
      std::swap(v[i - 1], v[j]);
    }
  };
  shuffle(order);
  size_t holdout = static_cast<size_t>(std::floor(config.holdout_fraction * double(dataset.size())));
  holdout = std::min(std::max<size_t>(holdout, 1), dataset.size() - 1);
  std::vector<size_t> train_idx(order.begin(), order.end() - static_cast<long>(holdout));
  std::vector<size_t> holdout_idx(order.end() - static_cast<long>(holdout), order.end());

  std::vector<double> grad(params.parameter_count(), 0.0);
  std::vector<double> batch_grad(params.parameter_count(), 0.0);
  std::vector<double> adam_m(params.parameter_count(), 0.0);
  std::vector<double> adam_v(params.parameter_count(), 0.0);
  int64_t step = 0;

  TrainMetrics metrics;
  metrics.loss_curve.reserve(static_cast<size_t>(config.epochs));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(train_idx);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < train_idx.size(); start += static_cast<size_t>(config.batch_size)) {
      size_t end = std::min(train_idx.size(), start + static_cast<size_t>(config.batch_size));
      std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
      double batch_loss = 0.0;
      for (size_t i = start; i < end; ++i) {
        std::fill(grad.begin(), grad.end(), 0.0);
        batch_loss += loss_and_gradient(params, dataset[train_idx[i]], grad);
        for (size_t k = 0; k < grad.size(); ++k) batch_grad[k] += grad[k];
      }
      double scale = 1.0 / static_cast<double>(end - start);
      if (!std::isfinite(batch_loss))
        throw TrainingDiverged("NaN/Inf loss at epoch " + std::to_string(epoch) +
                               " (learning_rate=" + std::to_string(config.learning_rate) + ")");
      epoch_loss += batch_loss;
      ++step;
      double b1t = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step));
      double b2t = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step));
      auto& flat = params.flat();
      for (size_t k = 0; k < flat.size(); ++k) {
        double g = batch_grad[k] * scale;
        adam_m[k] = config.adam_beta1 * adam_m[k] + (1.0 - config.adam_beta1) * g;
        adam_v[k] = config.adam_beta2 * adam_v[k] + (1.0 - config.adam_beta2) * g * g;
        double m_hat = adam_m[k] / b1t;
        double v_hat = adam_v[k] / b2t;
        flat[k] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_eps);
      }
    }
    if (!params.all_finite())
      throw TrainingDiverged("non-finite parameters after epoch " + std::to_string(epoch));
    metrics.loss_curve.push_back(epoch_loss / static_cast<double>(train_idx.size()));
  }

  auto accuracy = [&](const std::vector<size_t>& idx) {
    if (idx.empty()) return 0.0;
    int correct = 0;
    for (size_t i : idx) {
      ForwardResult r = forward(params, dataset[i]);
      if (r.predicted == dataset[i].label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(idx.size());
  };
  metrics.train_accuracy = accuracy(train_idx);
  metrics.holdout_accuracy = accuracy(holdout_idx);
  return {std::move(params), std::move(metrics)};
}

double finite_difference_check(const ModelParams& params, const EncodedSample& sample,
                               double epsilon, int checks, Rng& rng) {
  std::vector<double> grad;
  loss_and_gradient(params, sample, grad);
  ModelParams probe = params;
  double max_rel = 0.0;
  for (int c = 0; c < checks; ++c) {
    size_t k = static_cast<size_t>(rng.below(static_cast<uint32_t>(params.parameter_count())));
    double original = probe.flat()[k];
    probe.flat()[k] = original + epsilon;
    double loss_plus = forward(probe, sample).loss;
    probe.flat()[k] = original - epsilon;
    double loss_minus = forward(probe, sample).loss;
    probe.flat()[k] = original;
    double numeric = (loss_plus - loss_minus) / (2.0 * epsilon);
    double denom = std::max({std::abs(grad[k]), std::abs(numeric), 1e-6});
    max_rel = std::max(max_rel, std::abs(grad[k] - numeric) / denom);
  }
  return max_rel;
}

// ---------------------------------------------------------------------------
// Heat maps
// ---------------------------------------------------------------------------

double HeatMap::mean_over_valid() const {
  if (valid_len == 0) return 0.0;
  double sum = 0.0;
  for (int i = 0; i < valid_len; ++i) sum += heat[static_cast<size_t>(i)];
  return sum / static_cast<double>(valid_len);
}

std::optional<HeatMap> extract_heatmap(const ModelParams& params,
                                       const std::vector<ExecutionRecord>& records,
                                       const std::vector<Bytes>& seed_bytes,
                                       const TokenDictionary& dict, int seed_id,
                                       MutatorId mutator, int max_records) {
  const int n = params.dims().n;
  std::vector<double> sum(static_cast<size_t>(n), 0.0);
  int count = 0;
  int valid_len = 0;
  for (const auto& record : records) {
    if (max_records > 0 && count >= max_records) break;
    if (record.position < 0 || record.parent_seed != seed_id) continue;
    if (record.mutator != static_cast<int>(mutator)) continue;
    const Bytes& parent = seed_bytes[static_cast<size_t>(record.parent_seed)];
    Mutation m{mutator, record.position, record.param};
    Bytes input = apply_mutation(parent, m, dict);
    EncodedSample sample = encode_input(input, mutator, record.param, dict, n);
    ForwardResult result = forward(params, sample);
    for (int i = 0; i < n; ++i) sum[static_cast<size_t>(i)] += result.alpha[static_cast<size_t>(i)];
    valid_len = std::max(valid_len, sample.valid_len);
    ++count;
  }
  if (count == 0) return std::nullopt;
  HeatMap map;
  map.seed_id = seed_id;
  map.mutator = mutator;
  map.valid_len = valid_len;
  map.heat.assign(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) map.heat[static_cast<size_t>(i)] = sum[static_cast<size_t>(i)] / count;
  return map;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

constexpr uint32_t kModelMagic = 0x48465A4D;  // "HFZM"
constexpr uint32_t kModelVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                  static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in) {
  uint8_t b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

}  // namespace

void save_model(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write model '" + path + "'");
  put_u32(out, kModelMagic);
  put_u32(out, kModelVersion);
  put_u32(out, static_cast<uint32_t>(params.dims().n));
  put_u32(out, static_cast<uint32_t>(params.dims().d));
  put_u32(out, static_cast<uint32_t>(params.dims().d_prime));
  put_u32(out, static_cast<uint32_t>(params.dims().mutators));
  for (double v : params.flat()) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
  }
  if (!out) throw std::runtime_error("write failed on model '" + path + "'");
}

ModelParams load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model '" + path + "'");
  if (get_u32(in) != kModelMagic) throw std::runtime_error("bad model magic in '" + path + "'");
  uint32_t version = get_u32(in);
  if (version != kModelVersion)
    throw std::runtime_error("unsupported model version " + std::to_string(version));
  ModelDims dims;
  dims.n = static_cast<int>(get_u32(in));
  dims.d = static_cast<int>(get_u32(in));
  dims.d_prime = static_cast<int>(get_u32(in));
  dims.mutators = static_cast<int>(get_u32(in));
  ModelParams params(dims);
  for (double& v : params.flat()) {
    uint8_t b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
    std::memcpy(&v, &bits, 8);
  }
  if (!in) throw std::runtime_error("truncated model '" + path + "'");
  return params;
}

std::string heatmap_csv(const HeatMap& map) {
  std::ostringstream out;
  out << "position,heat\n";
  for (int i = 0; i < map.valid_len; ++i)
    out << i << ',' << map.heat[static_cast<size_t>(i)] << '\n';
  return out.str();
}

}  // namespace heatfuzz
