#pragma once

#include "fsadapt/types.hpp"

#include <functional>
#include <string>
#include <vector>

namespace fsadapt {

/// Row-wise softmax with row-max subtraction.
Matrix softmax_rows(const Matrix& logits);

/// Mean negative log-likelihood of `labels` under row-wise softmax of
/// `logits`, evaluated with log-sum-exp.
double softmax_cross_entropy(const Matrix& logits, const Labels& labels);

/// (P - Y) / N, the logit-space gradient of the mean cross-entropy.
Matrix softmax_cross_entropy_logit_grad(const Matrix& logits, const Labels& labels);

struct LossGrad {
  double loss = 0.0;
  Matrix grad_weights;  // K x D
  Vector grad_alpha;    // K (empty for the plain linear probe)
};

/// Linear-probe cross-entropy over fixed support features.
struct LpObjective {
  Matrix features;  // N x D
  Labels labels;    // N, in [0, K)
  Matrix weights;   // K x D

  LossGrad evaluate() const;
  Matrix logits(const Matrix& query) const;
};

/// Linear probe whose class weights are w_k + alpha_k t_k with frozen t.
struct LpTextObjective {
  Matrix features;  // N x D
  Labels labels;
  Matrix text;      // K x D, never modified by the optimizers
  Matrix weights;   // K x D
  Vector alpha;     // K

  LossGrad evaluate() const;
  /// Effective class weights W + diag(alpha) T.
  Matrix class_weights() const;
  Matrix logits(const Matrix& query) const;
};

LossGrad lp_loss_grad(const LpObjective& obj);
LossGrad lp_text_loss_grad(const LpTextObjective& obj);

struct PowerIterationOptions {
  int max_iters = 500;
  double rel_tol = 1e-13;
};

/// Largest singular value of `m` by power iteration on m^T m. Starts from
/// e_1 and re-seeds deterministically (normalized all-ones, then further
/// unit vectors) if the iterate collapses.
double spectral_norm(const Matrix& m, const PowerIterationOptions& opts = {});

struct LipschitzConstants {
  double weights = 0.0;  // sigma_max(F)^2 / (2N)
  double alpha = 0.0;    // sum_{i,k} (f_i . t_k)^2 / (2N)
};

/// Gradient-Lipschitz bounds of the mean softmax cross-entropy w.r.t. the
/// weight block and the multiplier block (logit-space curvature <= 1/2).
LipschitzConstants lipschitz_constants(const Matrix& features, const Matrix& text,
                                       const PowerIterationOptions& opts = {});

struct DescentReport {
  int iterations = 0;
  std::vector<double> loss_trace;  // initial loss followed by one entry per iteration
  int halvings = 0;
  int raw_step_failures = 0;  // iterations whose unhalved step did not descend
  bool converged = false;

  std::string to_json() const;
};

struct GdOptions {
  int max_iters = 300;
  double rel_tol = 1e-6;
  int max_halvings = 30;
  bool update_alpha = true;
};

template <typename Objective>
struct GdResult {
  Objective objective;
  DescentReport report;
};

/// Full-batch gradient descent with per-block steps 1/L. An iteration whose
/// step would raise the loss halves the step of the block(s) responsible.
GdResult<LpTextObjective> gd_fit(LpTextObjective obj, const GdOptions& opts = {});
/// Same loop on the plain linear probe (only the weight block).
GdResult<LpObjective> gd_fit(LpObjective obj, const GdOptions& opts = {});

/// Loss and gradient at x; the gradient is written into the second argument.
using DifferentiableFn = std::function<double(const Vector&, Vector&)>;

struct LbfgsOptions {
  int memory = 10;
  double grad_tol = 1e-6;
  int max_iters = 500;
  double armijo_c1 = 1e-4;
  double shrink = 0.5;
  double initial_step = 1.0;
  int max_shrinks = 50;
};

struct LbfgsReport {
  int iterations = 0;
  int function_evals = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double grad_inf_norm = 0.0;
  bool converged = false;

  std::string to_json() const;
};

struct LbfgsResult {
  Vector x;
  LbfgsReport report;
};

/// Limited-memory BFGS: two-loop recursion plus Armijo backtracking.
LbfgsResult lbfgs_minimize(const DifferentiableFn& fn, Vector x0, const LbfgsOptions& opts = {});

/// Central differences (f(x + h e_j) - f(x - h e_j)) / 2h per coordinate.
Vector finite_diff_grad(const std::function<double(const Vector&)>& fn, const Vector& x, double h = 1e-5);

}  // namespace fsadapt
