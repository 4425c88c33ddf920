#include "fsadapt/adapters.hpp"

#include "fsadapt/embedding_store.hpp"
#include "fsadapt/error.hpp"
#include "fsadapt/evaluation.hpp"
#include "fsadapt/pcg64.hpp"

#include <cmath>
#include <random>

namespace fsadapt {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::ZeroShot: return "zero-shot";
    case Method::LinearProbe: return "lp";
    case Method::LpText: return "lp+text";
    case Method::ClipAdapter: return "clip-adapter";
    case Method::TipAdapterF: return "tip-adapter-f";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::ZeroShot, Method::LinearProbe, Method::LpText, Method::ClipAdapter, Method::TipAdapterF}) {
    if (method_name(m) == name) return m;
  }
  throw Error(ErrorCode::UnknownMethod, "unknown method '" + std::string(name) + "'");
}

namespace {

void require_unit_rows(const Matrix& m, const char* what) {
  if (!rows_unit_norm(m, 1e-6)) throw Error(ErrorCode::NotNormalized, std::string(what) + " rows are not unit norm");
}

void require_query_dim(const Matrix& query, Index dim) {
  if (query.cols() != dim) {
    throw Error(ErrorCode::DimMismatch, "query has " + std::to_string(query.cols()) + " columns, expected " +
                                            std::to_string(dim));
  }
}

void require_support(const LabeledFeatures& s) {
  if (s.features.rows() < 1 || static_cast<Index>(s.labels.size()) != s.features.rows() || s.num_classes < 1) {
    throw Error(ErrorCode::DimMismatch, "support set is empty or inconsistent");
  }
  for (int y : s.labels) {
    if (y < 0 || y >= s.num_classes) throw Error(ErrorCode::LabelOutOfRange, "support label outside [0, K)");
  }
}

double validation_aca(const Matrix& scores, const LabeledFeatures& val) {
  return balanced_accuracy(argmax_rows(scores), val.labels, val.num_classes);
}

}  // namespace

Matrix zero_shot_predict(const Matrix& query, const ZeroShotHead& head) {
  if (!(head.temperature > 0.0)) throw Error(ErrorCode::ConfigError, "temperature must be positive");
  require_query_dim(query, head.text.cols());
  require_unit_rows(head.text, "text prototype");
  require_unit_rows(query, "query");
  return softmax_rows(head.temperature * (query * head.text.transpose()));
}

Matrix class_centroids(const LabeledFeatures& support) {
  require_support(support);
  Matrix c = Matrix::Zero(support.num_classes, support.features.cols());
  std::vector<int> count(static_cast<std::size_t>(support.num_classes), 0);
  for (Index i = 0; i < support.features.rows(); ++i) {
    const int y = support.labels[static_cast<std::size_t>(i)];
    c.row(y) += support.features.row(i);
    ++count[static_cast<std::size_t>(y)];
  }
  for (int k = 0; k < support.num_classes; ++k) {
    if (count[static_cast<std::size_t>(k)] > 0) c.row(k) /= count[static_cast<std::size_t>(k)];
  }
  return c;
}

LpState lp_fit(const LabeledFeatures& support, const LpConfig& cfg) {
  require_support(support);
  const Index k = support.num_classes;
  const Index d = support.features.cols();
  LpObjective obj{support.features, support.labels, class_centroids(support)};
  auto fn = [&obj, k, d](const Vector& x, Vector& g) {
    obj.weights = Eigen::Map<const Matrix>(x.data(), k, d);
    const LossGrad lg = lp_loss_grad(obj);
    g = Eigen::Map<const Vector>(lg.grad_weights.data(), k * d);
    return lg.loss;
  };
  const Vector x0 = Eigen::Map<const Vector>(obj.weights.data(), k * d);
  LbfgsResult res = lbfgs_minimize(fn, x0, cfg.lbfgs);
  return {Eigen::Map<const Matrix>(res.x.data(), k, d), res.report};
}

LpTextState lp_text_fit(const LabeledFeatures& support, const Matrix& text, const LpTextConfig& cfg) {
  require_support(support);
  if (text.rows() != support.num_classes || text.cols() != support.features.cols()) {
    throw Error(ErrorCode::DimMismatch, "text prototypes must be K x D");
  }
  require_unit_rows(text, "text prototype");
  LpTextObjective obj;
  obj.features = support.features;
  obj.labels = support.labels;
  obj.text = text;
  obj.weights = cfg.init == WeightInit::Centroids ? class_centroids(support)
                                                  : Matrix::Zero(support.num_classes, support.features.cols());
  obj.alpha = Vector::Constant(support.num_classes, cfg.alpha_init);
  auto fit = gd_fit(std::move(obj), cfg.gd);
  return {std::move(fit.objective.weights), std::move(fit.objective.alpha), text, std::move(fit.report)};
}

Matrix predict(const LpState& state, const Matrix& query) {
  require_query_dim(query, state.weights.cols());
  return softmax_rows(query * state.weights.transpose());
}

Matrix predict(const LpTextState& state, const Matrix& query) {
  require_query_dim(query, state.weights.cols());
  const Matrix w = state.weights + state.alpha.asDiagonal() * state.text;
  return softmax_rows(query * w.transpose());
}

// ------------------------------------------------------------- CLIP-Adapter

ClipAdapterState clip_adapter_init(Index dim, const Matrix& text, const ClipAdapterConfig& cfg) {
  const Index hidden = cfg.hidden > 0 ? cfg.hidden : std::max<Index>(1, dim / 2);
  ClipAdapterState s;
  s.a1.resize(dim, hidden);
  Pcg64 rng(cfg.init_seed, 0xADA);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  for (Index i = 0; i < s.a1.size(); ++i) s.a1.data()[i] = normal(rng);
  s.b1 = Vector::Zero(hidden);
  s.a2 = Matrix::Zero(hidden, dim);
  s.b2 = Vector::Zero(dim);
  s.ratio = cfg.ratio;
  s.text = text;
  s.temperature = cfg.temperature;
  return s;
}

namespace {

struct ClipForward {
  Matrix hidden_pre;  // X A1 + b1
  Matrix hidden;      // ReLU
  Matrix blended;     // r M + (1 - r) X
  Vector norms;
  Matrix adapted;     // blended / norms
};

ClipForward clip_forward(const ClipAdapterState& s, const Matrix& x) {
  ClipForward f;
  f.hidden_pre = (x * s.a1).rowwise() + s.b1.transpose();
  f.hidden = f.hidden_pre.cwiseMax(0.0);
  const Matrix mlp = (f.hidden * s.a2).rowwise() + s.b2.transpose();
  f.blended = s.ratio * mlp + (1.0 - s.ratio) * x;
  f.norms = f.blended.rowwise().norm();
  for (Index i = 0; i < f.norms.size(); ++i) {
    if (!(f.norms(i) >= kZeroNormThreshold)) throw Error(ErrorCode::ZeroNormRow, "adapted feature collapsed to zero");
  }
  f.adapted = f.norms.cwiseInverse().asDiagonal() * f.blended;
  return f;
}

}  // namespace

Matrix ClipAdapterState::adapt(const Matrix& query) const {
  require_query_dim(query, a1.rows());
  return clip_forward(*this, query).adapted;
}

Matrix ClipAdapterState::logits(const Matrix& query) const {
  return temperature * (adapt(query) * text.transpose());
}

Matrix predict(const ClipAdapterState& state, const Matrix& query) { return softmax_rows(state.logits(query)); }

Vector clip_adapter_pack(const ClipAdapterState& s) {
  Vector p(s.a1.size() + s.b1.size() + s.a2.size() + s.b2.size());
  Index o = 0;
  p.segment(o, s.a1.size()) = Eigen::Map<const Vector>(s.a1.data(), s.a1.size());
  o += s.a1.size();
  p.segment(o, s.b1.size()) = s.b1;
  o += s.b1.size();
  p.segment(o, s.a2.size()) = Eigen::Map<const Vector>(s.a2.data(), s.a2.size());
  o += s.a2.size();
  p.segment(o, s.b2.size()) = s.b2;
  return p;
}

void clip_adapter_unpack(ClipAdapterState& s, const Vector& p) {
  Index o = 0;
  Eigen::Map<Vector>(s.a1.data(), s.a1.size()) = p.segment(o, s.a1.size());
  o += s.a1.size();
  s.b1 = p.segment(o, s.b1.size());
  o += s.b1.size();
  Eigen::Map<Vector>(s.a2.data(), s.a2.size()) = p.segment(o, s.a2.size());
  o += s.a2.size();
  s.b2 = p.segment(o, s.b2.size());
}

double clip_adapter_loss_grad(const ClipAdapterState& s, const LabeledFeatures& support, Vector* grad) {
  const ClipForward f = clip_forward(s, support.features);
  const Matrix logits = s.temperature * (f.adapted * s.text.transpose());
  const double loss = softmax_cross_entropy(logits, support.labels);
  if (grad == nullptr) return loss;

  const Matrix g_logits = softmax_cross_entropy_logit_grad(logits, support.labels);
  const Matrix g_adapted = s.temperature * (g_logits * s.text);
  // Backprop through row normalization: (g - (g.z) z) / |u|.
  const Vector dots = g_adapted.cwiseProduct(f.adapted).rowwise().sum();
  const Matrix g_blended =
      f.norms.cwiseInverse().asDiagonal() * (g_adapted - dots.asDiagonal() * f.adapted);
  const Matrix g_mlp = s.ratio * g_blended;
  const Matrix g_hidden = (g_mlp * s.a2.transpose()).cwiseProduct(
      (f.hidden_pre.array() > 0.0).cast<double>().matrix());

  ClipAdapterState g = s;
  g.a1 = support.features.transpose() * g_hidden;
  g.b1 = g_hidden.colwise().sum().transpose();
  g.a2 = f.hidden.transpose() * g_mlp;
  g.b2 = g_mlp.colwise().sum().transpose();
  *grad = clip_adapter_pack(g);
  return loss;
}

namespace {

ClipAdapterState clip_adapter_train(ClipAdapterState state, const LabeledFeatures& support,
                                    const LbfgsOptions& opts) {
  ClipAdapterState probe = state;
  auto fn = [&probe, &support](const Vector& x, Vector& g) {
    clip_adapter_unpack(probe, x);
    return clip_adapter_loss_grad(probe, support, &g);
  };
  const LbfgsResult res = lbfgs_minimize(fn, clip_adapter_pack(state), opts);
  clip_adapter_unpack(state, res.x);
  return state;
}

}  // namespace

ClipAdapterState clip_adapter_fit(const LabeledFeatures& support, const Matrix& text, const ClipAdapterConfig& cfg,
                                  const std::optional<LabeledFeatures>& validation) {
  require_support(support);
  if (text.rows() != support.num_classes || text.cols() != support.features.cols()) {
    throw Error(ErrorCode::DimMismatch, "text prototypes must be K x D");
  }
  for (double r : cfg.ratio_grid) {
    if (r < 0.0 || r > 1.0) throw Error(ErrorCode::ConfigError, "residual ratio must lie in [0, 1]");
  }
  const ClipAdapterState init = clip_adapter_init(support.features.cols(), text, cfg);
  if (!validation) {
    ClipAdapterState s = init;
    s.ratio = cfg.ratio;
    return clip_adapter_train(std::move(s), support, cfg.lbfgs);
  }
  std::vector<ClipAdapterState> trained;
  std::function<double(const double&)> score = [&](const double& r) {
    ClipAdapterState s = init;
    s.ratio = r;
    trained.push_back(clip_adapter_train(std::move(s), support, cfg.lbfgs));
    return validation_aca(trained.back().logits(validation->features), *validation);
  };
  const auto best = grid_search(cfg.ratio_grid, score);
  return trained[best.best_index];
}

// -------------------------------------------------------------- Tip-Adapter

TipAdapterState tip_adapter_build(const LabeledFeatures& support, const Matrix& text, double alpha_blend,
                                  double beta_sharp, double temperature) {
  require_support(support);
  if (text.rows() != support.num_classes || text.cols() != support.features.cols()) {
    throw Error(ErrorCode::DimMismatch, "text prototypes must be K x D");
  }
  if (!(beta_sharp > 0.0) || !(alpha_blend >= 0.0) || !(temperature > 0.0)) {
    throw Error(ErrorCode::ConfigError, "tip-adapter needs alpha >= 0, beta > 0, tau > 0");
  }
  require_unit_rows(support.features, "support");
  require_unit_rows(text, "text prototype");
  TipAdapterState s;
  s.keys = support.features;
  s.values = Matrix::Zero(support.features.rows(), support.num_classes);
  for (std::size_t i = 0; i < support.labels.size(); ++i) s.values(static_cast<Index>(i), support.labels[i]) = 1.0;
  s.alpha_blend = alpha_blend;
  s.beta_sharp = beta_sharp;
  s.text = text;
  s.temperature = temperature;
  return s;
}

Matrix TipAdapterState::logits(const Matrix& query) const {
  require_query_dim(query, keys.cols());
  require_unit_rows(query, "query");
  const Matrix affinity = (-beta_sharp * (1.0 - (query * keys.transpose()).array())).exp().matrix();
  return alpha_blend * (affinity * values) + temperature * (query * text.transpose());
}

Matrix predict(const TipAdapterState& state, const Matrix& query) { return softmax_rows(state.logits(query)); }

double tip_adapter_loss_grad(const TipAdapterState& s, const LabeledFeatures& data, Matrix* grad_keys) {
  const Matrix& q = data.features;
  const Matrix affinity = (-s.beta_sharp * (1.0 - (q * s.keys.transpose()).array())).exp().matrix();
  const Matrix logits = s.alpha_blend * (affinity * s.values) + s.temperature * (q * s.text.transpose());
  const double loss = softmax_cross_entropy(logits, data.labels);
  if (grad_keys != nullptr) {
    const Matrix g_logits = softmax_cross_entropy_logit_grad(logits, data.labels);
    const Matrix g_sim = (s.alpha_blend * s.beta_sharp) * (g_logits * s.values.transpose()).cwiseProduct(affinity);
    *grad_keys = g_sim.transpose() * q;
  }
  return loss;
}

TipAdapterState tip_adapter_finetune(TipAdapterState state, const LabeledFeatures& support,
                                     const TipAdapterConfig& cfg, const std::optional<LabeledFeatures>& validation) {
  require_support(support);
  require_unit_rows(support.features, "support");
  Matrix grad;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double loss = tip_adapter_loss_grad(state, support, &grad);
    if (!std::isfinite(loss) || !grad.allFinite()) {
      throw Error(ErrorCode::NonFiniteLoss, "tip-adapter loss diverged at epoch " + std::to_string(epoch));
    }
    state.keys -= cfg.learning_rate * grad;
  }
  if (!std::isfinite(tip_adapter_loss_grad(state, support, nullptr))) {
    throw Error(ErrorCode::NonFiniteLoss, "tip-adapter loss is not finite after fine-tuning");
  }
  if (validation) {
    std::vector<std::pair<double, double>> grid;
    for (double a : cfg.alpha_grid) {
      for (double b : cfg.beta_grid) grid.emplace_back(a, b);
    }
    std::function<double(const std::pair<double, double>&)> score = [&](const std::pair<double, double>& ab) {
      TipAdapterState s = state;
      s.alpha_blend = ab.first;
      s.beta_sharp = ab.second;
      return validation_aca(s.logits(validation->features), *validation);
    };
    const auto best = grid_search(grid, score);
    state.alpha_blend = best.best.first;
    state.beta_sharp = best.best.second;
  }
  return state;
}

// ------------------------------------------------------------------ sizing

ParamCount parameter_count(Method method, std::int64_t num_classes, std::int64_t dim, std::int64_t shots,
                           std::int64_t hidden) {
  if (num_classes < 1 || dim < 1 || shots < 1 || hidden < 0) {
    throw Error(ErrorCode::ConfigError, "parameter_count needs positive dimensions");
  }
  switch (method) {
    case Method::ZeroShot: return {0, 0};
    case Method::LinearProbe: return {num_classes * dim, 0};
    case Method::LpText: return {num_classes * (dim + 1), 0};
    case Method::TipAdapterF: return {num_classes * shots * dim, 0};
    case Method::ClipAdapter: {
      const std::int64_t d1 = hidden > 0 ? hidden : std::max<std::int64_t>(1, dim / 2);
      return {2 * d1 * dim, d1 + dim};
    }
  }
  throw Error(ErrorCode::UnknownMethod, "unknown method");
}

ParamCount parameter_count(std::string_view method, std::int64_t num_classes, std::int64_t dim, std::int64_t shots,
                           std::int64_t hidden) {
  return parameter_count(parse_method(method), num_classes, dim, shots, hidden);
}

}  // namespace fsadapt
