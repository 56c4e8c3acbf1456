#pragma once

#include <span>

#include "eqi/traingen.hpp"

namespace eqi {

enum class TransformKind { append, residual };
TransformKind transform_kind_from_string(std::string_view s);
const char* transform_kind_name(TransformKind kind);

// One affine layer; hidden layers additionally run ReLU, dropout and layer
// normalization (in that order) after the affine map.
struct DenseLayer {
  uint32_t in_dim = 0;
  uint32_t out_dim = 0;
  bool hidden = false;
  std::vector<double> w;  // row-major [out_dim][in_dim]
  std::vector<double> b;
  std::vector<double> ln_gain;   // hidden layers only
  std::vector<double> ln_shift;  // hidden layers only
};

// Feedforward transform over a frozen base embedding.
// append:   y = (x, FF(x)), FF: three hidden layers + affine output
// residual: y = x + FF(x),  FF: one hidden layer + zero-initialized affine
//           output, so the initial transform is exactly the identity.
struct TransformParams {
  TransformKind kind = TransformKind::residual;
  uint32_t input_dim = 0;
  uint32_t output_dim = 0;
  double dropout_rate = 0.1;
  std::vector<DenseLayer> ff;

  size_t param_count() const;
};

TransformParams init_transform(TransformKind kind, uint32_t input_dim,
                               uint64_t seed);

enum class ForwardMode { train, eval };

// Eval mode is a pure function; train mode draws one dropout decision per
// hidden unit from `rng` (inverted scaling, so eval needs no rescale).
std::vector<double> transform_forward(const TransformParams& params,
                                      std::span<const float> x,
                                      ForwardMode mode, Rng* rng);

std::vector<float> transform_apply_f32(const TransformParams& params,
                                       std::span<const float> x);

struct EqiModel {
  TransformParams hq;  // query-side transform
  TransformParams hd;  // document-side transform
  std::string base_fingerprint;

  void save(const std::filesystem::path& dir) const;
  static EqiModel load(const std::filesystem::path& dir);
};

// log(1 + e^-delta), evaluated in softplus form so large |delta| is exact.
double ranknet_loss(double delta);
double ranknet_dloss(double delta);  // d/d(delta) = -1 / (1 + e^delta)

// Dot product of the eval-mode transformed vectors.
double pair_score(const EqiModel& model, std::span<const float> doc_base,
                  std::span<const float> query_base);

struct TrainConfig {
  uint32_t iterations = 1000;
  uint32_t batches_per_iteration = 100;
  uint32_t samples_per_batch = 1000;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double dropout = 0.1;
  double alpha = 0.5;
  // Pairwise margins enter the loss as (u+ - u-) / loss_temperature. Unit-
  // normalized base vectors give margins of ~0.1 where encoder-scale dots
  // give tens, so the temperature restores the saturating regime in which
  // only misordered pairs carry gradient. 1.0 is the plain pairwise form.
  double loss_temperature = 1.0;
  uint64_t seed = 1;
  bool share_weights = false;  // ablation: hq and hd use one parameter set
};

struct TrainReport {
  std::vector<double> iteration_mean_loss;
  double wall_seconds = 0.0;

  void save_csv(const std::filesystem::path& path) const;
};

using VecMap = std::unordered_map<uint64_t, std::vector<float>>;

// Adaptive-moment gradient descent on hq/hd only; base vectors stay frozen.
// Deterministic for a fixed config. Final parameters are rounded to f32 so
// the in-memory model matches its serialized form bit for bit.
std::pair<EqiModel, TrainReport> train_transform(const TrainSet& train_set,
                                                 const VecMap& doc_vecs,
                                                 const VecMap& query_vecs,
                                                 TransformKind kind,
                                                 const TrainConfig& config,
                                                 std::string base_fingerprint);

struct GradProbe {
  std::vector<float> doc;
  std::vector<float> q_pos;
  std::vector<float> q_neg;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  size_t params_checked = 0;
  size_t params_skipped_at_kinks = 0;
};

// Analytic batch-loss gradient vs central finite differences (dropout
// disabled) for every parameter of both transforms. Parameters whose +-h
// evaluations cross a ReLU kink are reported separately, not compared.
GradCheckReport gradient_check(const EqiModel& model,
                               const std::vector<GradProbe>& probes,
                               double h = 1e-4);

}  // namespace eqi
