#include "fsadapt/numopt.hpp"

#include "fsadapt/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace fsadapt {

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - mx).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

double softmax_cross_entropy(const Matrix& logits, const Labels& labels) {
  const Index n = logits.rows();
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    total += lse - logits(i, labels[static_cast<std::size_t>(i)]);
  }
  return total / static_cast<double>(n);
}

Matrix softmax_cross_entropy_logit_grad(const Matrix& logits, const Labels& labels) {
  Matrix g = softmax_rows(logits);
  for (Index i = 0; i < g.rows(); ++i) g(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  return g / static_cast<double>(g.rows());
}

Matrix LpObjective::logits(const Matrix& query) const { return query * weights.transpose(); }

LossGrad LpObjective::evaluate() const { return lp_loss_grad(*this); }

Matrix LpTextObjective::class_weights() const { return weights + alpha.asDiagonal() * text; }

Matrix LpTextObjective::logits(const Matrix& query) const { return query * class_weights().transpose(); }

LossGrad LpTextObjective::evaluate() const { return lp_text_loss_grad(*this); }

namespace {

void check_dims(const Matrix& features, const Labels& labels, const Matrix& weights) {
  if (static_cast<Index>(labels.size()) != features.rows() || weights.cols() != features.cols()) {
    throw Error(ErrorCode::DimMismatch, "objective dimensions are inconsistent");
  }
  for (int y : labels) {
    if (y < 0 || y >= weights.rows()) throw Error(ErrorCode::LabelOutOfRange, "label outside [0, K)");
  }
}

}  // namespace

LossGrad lp_loss_grad(const LpObjective& obj) {
  check_dims(obj.features, obj.labels, obj.weights);
  const Matrix logits = obj.logits(obj.features);
  const Matrix g = softmax_cross_entropy_logit_grad(logits, obj.labels);
  return {softmax_cross_entropy(logits, obj.labels), g.transpose() * obj.features, Vector()};
}

LossGrad lp_text_loss_grad(const LpTextObjective& obj) {
  check_dims(obj.features, obj.labels, obj.weights);
  if (obj.text.rows() != obj.weights.rows() || obj.text.cols() != obj.weights.cols() ||
      obj.alpha.size() != obj.weights.rows()) {
    throw Error(ErrorCode::DimMismatch, "text prototypes / multipliers do not match the weights");
  }
  const Matrix logits = obj.logits(obj.features);
  const Matrix g = softmax_cross_entropy_logit_grad(logits, obj.labels);
  const Matrix sim = obj.features * obj.text.transpose();  // f_i . t_k
  LossGrad out{softmax_cross_entropy(logits, obj.labels), g.transpose() * obj.features, Vector()};
  out.grad_alpha = g.cwiseProduct(sim).colwise().sum().transpose();
  return out;
}

double spectral_norm(const Matrix& m, const PowerIterationOptions& opts) {
  if (m.cols() == 0 || m.rows() == 0) return 0.0;
  // Iterate on the smaller Gram matrix; both share the nonzero spectrum.
  const Matrix gram = m.cols() <= m.rows() ? Matrix(m.transpose() * m) : Matrix(m * m.transpose());
  const Index g = gram.rows();
  // Candidate start vectors: e_1, normalized ones, then e_2..e_g.
  auto start = [&](Index attempt) {
    Vector v = Vector::Zero(g);
    if (attempt == 0) {
      v(0) = 1.0;
    } else if (attempt == 1) {
      v.setConstant(1.0 / std::sqrt(static_cast<double>(g)));
    } else {
      v(attempt - 1) = 1.0;
    }
    return v;
  };
  for (Index attempt = 0; attempt <= g; ++attempt) {
    Vector v = start(attempt);
    double lambda = 0.0;
    bool collapsed = false;
    for (int it = 0; it < opts.max_iters; ++it) {
      Vector w = gram * v;
      const double next = v.dot(w);
      const double wn = w.norm();
      if (!(wn > 0.0)) {
        collapsed = true;
        break;
      }
      v = w / wn;
      const bool done = std::abs(next - lambda) <= opts.rel_tol * next;
      lambda = next;
      if (done) break;
    }
    if (!collapsed) return std::sqrt(std::max(v.dot(gram * v), 0.0));
  }
  return 0.0;
}

LipschitzConstants lipschitz_constants(const Matrix& features, const Matrix& text,
                                       const PowerIterationOptions& opts) {
  if (features.rows() < 1) throw Error(ErrorCode::DegenerateInput, "no support samples");
  if (features.isZero(0.0)) throw Error(ErrorCode::DegenerateInput, "support features are all zero");
  const double n = static_cast<double>(features.rows());
  const double sigma = spectral_norm(features, opts);
  LipschitzConstants out;
  out.weights = sigma * sigma / (2.0 * n);
  if (text.size() > 0) out.alpha = (features * text.transpose()).squaredNorm() / (2.0 * n);
  return out;
}

std::string DescentReport::to_json() const {
  nlohmann::ordered_json j;
  j["iterations"] = iterations;
  j["halvings"] = halvings;
  j["raw_step_failures"] = raw_step_failures;
  j["converged"] = converged;
  j["loss_trace"] = loss_trace;
  return j.dump();
}

namespace {

// Shared block-descent loop. `eval(W, alpha)` returns loss and gradients;
// when `alpha` is null only the weight block exists.
template <typename Eval>
DescentReport block_descent(Matrix& weights, Vector* alpha, const LipschitzConstants& lip,
                            const GdOptions& opts, Eval&& eval) {
  DescentReport report;
  const bool use_alpha = alpha != nullptr && opts.update_alpha && lip.alpha > 0.0;
  const Vector no_alpha;
  auto alpha_or = [&](const Vector* a) -> const Vector& { return a != nullptr ? *a : no_alpha; };

  LossGrad cur = eval(weights, alpha_or(alpha));
  if (!std::isfinite(cur.loss)) throw Error(ErrorCode::NonFiniteLoss, "initial loss is not finite");
  report.loss_trace.push_back(cur.loss);

  for (int it = 0; it < opts.max_iters; ++it) {
    double step_w = 1.0 / lip.weights;
    double step_a = use_alpha ? 1.0 / lip.alpha : 0.0;
    bool accepted = false;
    Matrix next_w;
    Vector next_a;
    LossGrad next;
    for (int h = 0; h <= opts.max_halvings; ++h) {
      next_w = weights - step_w * cur.grad_weights;
      if (use_alpha) next_a = *alpha - step_a * cur.grad_alpha;
      next = eval(next_w, use_alpha ? next_a : alpha_or(alpha));
      if (std::isfinite(next.loss) && next.loss <= cur.loss) {
        accepted = true;
        break;
      }
      if (h == 0) ++report.raw_step_failures;
      if (h == opts.max_halvings) break;
      bool halve_w = true;
      bool halve_a = use_alpha;
      if (use_alpha) {
        // Attribute the increase to whichever block raises the loss alone.
        const double only_w = eval(next_w, *alpha).loss;
        const double only_a = eval(weights, next_a).loss;
        halve_w = !(only_w <= cur.loss);
        halve_a = !(only_a <= cur.loss);
        if (!halve_w && !halve_a) halve_w = halve_a = true;
      }
      if (halve_w) step_w *= 0.5;
      if (halve_a) step_a *= 0.5;
      ++report.halvings;
    }
    if (!accepted) {
      // No descent within the halving budget: the point is numerically stationary.
      report.converged = true;
      break;
    }
    ++report.iterations;
    const double rel = std::abs(cur.loss - next.loss) / std::max(std::abs(cur.loss), std::numeric_limits<double>::min());
    weights = std::move(next_w);
    if (use_alpha) *alpha = std::move(next_a);
    cur = std::move(next);
    report.loss_trace.push_back(cur.loss);
    if (rel < opts.rel_tol) {
      report.converged = true;
      break;
    }
  }
  return report;
}

}  // namespace

GdResult<LpTextObjective> gd_fit(LpTextObjective obj, const GdOptions& opts) {
  const auto lip = lipschitz_constants(obj.features, obj.text);
  lp_text_loss_grad(obj);  // dimension checks
  // F T^T is fixed, so logits are F W^T + sim diag(alpha).
  const Matrix sim = obj.features * obj.text.transpose();
  auto eval = [&obj, &sim](const Matrix& w, const Vector& a) {
    Matrix logits = obj.features * w.transpose();
    logits += sim * a.asDiagonal();
    const Matrix g = softmax_cross_entropy_logit_grad(logits, obj.labels);
    LossGrad out{softmax_cross_entropy(logits, obj.labels), g.transpose() * obj.features, Vector()};
    out.grad_alpha = g.cwiseProduct(sim).colwise().sum().transpose();
    return out;
  };
  DescentReport report = block_descent(obj.weights, &obj.alpha, lip, opts, eval);
  return {std::move(obj), std::move(report)};
}

GdResult<LpObjective> gd_fit(LpObjective obj, const GdOptions& opts) {
  LipschitzConstants lip = lipschitz_constants(obj.features, Matrix());
  LpObjective probe = obj;
  auto eval = [&probe](const Matrix& w, const Vector&) {
    probe.weights = w;
    return lp_loss_grad(probe);
  };
  DescentReport report = block_descent(obj.weights, nullptr, lip, opts, eval);
  return {std::move(obj), std::move(report)};
}

std::string LbfgsReport::to_json() const {
  nlohmann::ordered_json j;
  j["iterations"] = iterations;
  j["function_evals"] = function_evals;
  j["initial_loss"] = initial_loss;
  j["final_loss"] = final_loss;
  j["grad_inf_norm"] = grad_inf_norm;
  j["converged"] = converged;
  return j.dump();
}

LbfgsResult lbfgs_minimize(const DifferentiableFn& fn, Vector x0, const LbfgsOptions& opts) {
  LbfgsResult result;
  auto& rep = result.report;
  Vector x = std::move(x0);
  Vector g(x.size());
  double f = fn(x, g);
  ++rep.function_evals;
  if (!std::isfinite(f) || !g.allFinite()) throw Error(ErrorCode::NonFiniteLoss, "objective not finite at x0");
  rep.initial_loss = f;

  std::deque<Vector> s_hist;
  std::deque<Vector> y_hist;
  std::deque<double> rho_hist;
  const auto memory = static_cast<std::size_t>(std::max(opts.memory, 1));

  Vector x_new(x.size());
  Vector g_new(x.size());
  while (g.lpNorm<Eigen::Infinity>() >= opts.grad_tol && rep.iterations < opts.max_iters) {
    // Two-loop recursion for d = -H g.
    Vector q = g;
    std::vector<double> a(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      a[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= a[i] * y_hist[i];
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double b = rho_hist[i] * y_hist[i].dot(q);
      q += (a[i] - b) * s_hist[i];
    }
    Vector d = -q;
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      // Lost descent direction: restart from steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      d = -g;
      slope = -g.squaredNorm();
    }

    bool found = false;
    double f_new = f;
    for (int attempt = 0; attempt < 2 && !found; ++attempt) {
      double step = opts.initial_step;
      for (int shrink = 0; shrink <= opts.max_shrinks; ++shrink) {
        x_new = x + step * d;
        f_new = fn(x_new, g_new);
        ++rep.function_evals;
        if (std::isfinite(f_new) && g_new.allFinite()) {
          const bool armijo = f_new <= f + opts.armijo_c1 * step * slope;
          // Near the optimum f differences drown in rounding; fall back to the
          // derivative form of the sufficient-decrease test.
          const bool flat = f_new <= f + 1e-12 * (1.0 + std::abs(f)) &&
                            g_new.dot(d) <= (2.0 * opts.armijo_c1 - 1.0) * slope;
          if (armijo || flat) {
            found = true;
            break;
          }
        }
        step *= opts.shrink;
      }
      if (!found && !s_hist.empty()) {
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        d = -g;
        slope = -g.squaredNorm();
      } else if (!found) {
        break;
      }
    }
    if (!found) {
      throw Error(ErrorCode::LineSearchFailure,
                  "no Armijo step after " + std::to_string(opts.max_shrinks) + " shrinks (iteration " +
                      std::to_string(rep.iterations) + ")");
    }

    Vector s = x_new - x;
    Vector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * std::sqrt(s.squaredNorm() * y.squaredNorm()) && sy > 0.0) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    } else {
      // Stale pairs keep producing tiny steps on nonconvex stretches.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    ++rep.iterations;
  }
  rep.final_loss = f;
  rep.grad_inf_norm = g.lpNorm<Eigen::Infinity>();
  rep.converged = rep.grad_inf_norm < opts.grad_tol;
  result.x = std::move(x);
  return result;
}

Vector finite_diff_grad(const std::function<double(const Vector&)>& fn, const Vector& x, double h) {
  Vector g(x.size());
  Vector probe = x;
  for (Index j = 0; j < x.size(); ++j) {
    probe(j) = x(j) + h;
    const double up = fn(probe);
    probe(j) = x(j) - h;
    const double down = fn(probe);
    probe(j) = x(j);
    g(j) = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace fsadapt
