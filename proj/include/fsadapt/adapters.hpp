#pragma once

#include "fsadapt/numopt.hpp"
#include "fsadapt/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fsadapt {

/// Features with their class labels, e.g. the support or validation part
/// of an episode.
struct LabeledFeatures {
  Matrix features;  // N x D
  Labels labels;
  int num_classes = 0;
};

inline constexpr double kDefaultTemperature = 100.0;

enum class Method { ZeroShot, LinearProbe, LpText, ClipAdapter, TipAdapterF };

std::string_view method_name(Method m);
/// Accepts "zero-shot", "lp", "lp+text", "clip-adapter", "tip-adapter-f".
Method parse_method(std::string_view name);

// ---------------------------------------------------------------- zero-shot

struct ZeroShotHead {
  Matrix text;  // K x D, unit rows
  double temperature = kDefaultTemperature;
};

/// softmax(tau * Q T^T). Query and text rows must be unit norm.
Matrix zero_shot_predict(const Matrix& query, const ZeroShotHead& head);

// ------------------------------------------------------------ linear probes

enum class WeightInit { Centroids, Zeros };

/// Per-class mean of the support features (K x D).
Matrix class_centroids(const LabeledFeatures& support);

struct LpConfig {
  LbfgsOptions lbfgs;
};

struct LpState {
  Matrix weights;  // K x D
  LbfgsReport report;
};

LpState lp_fit(const LabeledFeatures& support, const LpConfig& cfg = {});

struct LpTextConfig {
  GdOptions gd;
  WeightInit init = WeightInit::Centroids;
  double alpha_init = 1.0;
};

struct LpTextState {
  Matrix weights;  // K x D
  Vector alpha;    // K
  Matrix text;     // K x D, frozen
  DescentReport report;
};

LpTextState lp_text_fit(const LabeledFeatures& support, const Matrix& text, const LpTextConfig& cfg = {});

Matrix predict(const LpState& state, const Matrix& query);
Matrix predict(const LpTextState& state, const Matrix& query);

// ------------------------------------------------------------- CLIP-Adapter

struct ClipAdapterConfig {
  int hidden = 0;  // 0 selects D/2
  double ratio = 0.2;
  std::vector<double> ratio_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double temperature = kDefaultTemperature;
  LbfgsOptions lbfgs = {.max_iters = 100};
  std::uint64_t init_seed = 0;
};

struct ClipAdapterState {
  Matrix a1;  // D x D1
  Vector b1;  // D1
  Matrix a2;  // D1 x D
  Vector b2;  // D
  double ratio = 0.2;
  Matrix text;
  double temperature = kDefaultTemperature;

  /// L2-normalized r * MLP(f) + (1 - r) * f for each query row.
  Matrix adapt(const Matrix& query) const;
  Matrix logits(const Matrix& query) const;
};

/// Untrained adapter: small random first layer, zero second layer, so the
/// residual blend starts at the identity.
ClipAdapterState clip_adapter_init(Index dim, const Matrix& text, const ClipAdapterConfig& cfg);

/// Trains the MLP with L-BFGS on the support cross-entropy at `cfg.ratio`.
/// With a validation set, every ratio in `cfg.ratio_grid` is trained and
/// the one with the best validation ACA is kept.
ClipAdapterState clip_adapter_fit(const LabeledFeatures& support, const Matrix& text, const ClipAdapterConfig& cfg,
                                  const std::optional<LabeledFeatures>& validation = std::nullopt);

Matrix predict(const ClipAdapterState& state, const Matrix& query);

/// Mean support cross-entropy and its gradient w.r.t. the packed
/// parameters [A1, b1, A2, b2]; exposed for gradient checks.
double clip_adapter_loss_grad(const ClipAdapterState& state, const LabeledFeatures& support, Vector* grad);
Vector clip_adapter_pack(const ClipAdapterState& state);
void clip_adapter_unpack(ClipAdapterState& state, const Vector& params);

// -------------------------------------------------------------- Tip-Adapter

struct TipAdapterState {
  Matrix keys;    // (K*S) x D
  Matrix values;  // (K*S) x K one-hot, frozen
  double alpha_blend = 1.0;
  double beta_sharp = 1.0;
  Matrix text;
  double temperature = kDefaultTemperature;

  /// alpha * exp(-beta (1 - Q keys^T)) values + tau * Q T^T
  Matrix logits(const Matrix& query) const;
};

TipAdapterState tip_adapter_build(const LabeledFeatures& support, const Matrix& text, double alpha_blend = 1.0,
                                  double beta_sharp = 1.0, double temperature = kDefaultTemperature);

struct TipAdapterConfig {
  double learning_rate = 1e-3;
  int epochs = 100;
  std::vector<double> alpha_grid = {0.5, 1.0, 2.0, 3.0, 5.0};
  std::vector<double> beta_grid = {1.0, 2.0, 3.0, 5.0, 7.0};
};

/// Mean cross-entropy of `data` under the state and its gradient w.r.t.
/// the keys.
double tip_adapter_loss_grad(const TipAdapterState& state, const LabeledFeatures& data, Matrix* grad_keys);

/// Full-batch GD on the keys (values and text frozen), then, if a
/// validation set is given, (alpha, beta) chosen from the grids by
/// validation ACA.
TipAdapterState tip_adapter_finetune(TipAdapterState state, const LabeledFeatures& support,
                                     const TipAdapterConfig& cfg = {},
                                     const std::optional<LabeledFeatures>& validation = std::nullopt);

Matrix predict(const TipAdapterState& state, const Matrix& query);

// ------------------------------------------------------------------ sizing

struct ParamCount {
  std::int64_t weights = 0;  // trainable parameter count per the efficiency table
  std::int64_t biases = 0;   // reported separately
};

/// `hidden` of 0 selects D/2 for the CLIP-Adapter bottleneck.
ParamCount parameter_count(Method method, std::int64_t num_classes, std::int64_t dim, std::int64_t shots,
                           std::int64_t hidden = 0);
ParamCount parameter_count(std::string_view method, std::int64_t num_classes, std::int64_t dim,
                           std::int64_t shots, std::int64_t hidden = 0);

}  // namespace fsadapt
