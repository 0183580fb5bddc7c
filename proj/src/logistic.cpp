#include "cbandit/logistic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "cbandit/error.hpp"

namespace cbandit {

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

void softmax_inplace(std::span<double> scores) {
  const double top = *std::max_element(scores.begin(), scores.end());
  double total = 0.0;
  for (double& s : scores) {
    s = std::exp(s - top);
    total += s;
  }
  for (double& s : scores) s /= total;
}

namespace {

Eigen::MatrixXd with_intercept_column(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(x.cols()) = x;
  return out;
}

// Minimizes a smooth convex problem by Newton's method with Armijo backtracking.
template <typename Problem>
Eigen::VectorXd minimize_newton(const Problem& problem, Eigen::VectorXd params,
                                const NewtonOptions& options, OptimizerTrace& trace) {
  double f = problem.value(params);
  trace.objective.assign(1, f);
  trace.iterations = 0;
  trace.converged = false;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Eigen::VectorXd g = problem.gradient(params);
    if (!g.allFinite()) throw FitError("non-finite gradient in Newton solver");
    if (g.norm() < options.gradient_tolerance) {
      trace.converged = true;
      break;
    }
    Eigen::MatrixXd h = problem.hessian(params);
    Eigen::VectorXd step;
    double jitter = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
      if (jitter > 0.0) h.diagonal().array() += jitter;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        step = -ldlt.solve(g);
        if (step.allFinite() && step.dot(g) < 0.0) break;
      }
      step.resize(0);
      jitter = jitter == 0.0 ? 1e-10 * std::max(1.0, h.diagonal().cwiseAbs().maxCoeff())
                             : jitter * 100.0;
    }
    if (step.size() == 0) step = -g;

    const double slope = step.dot(g);
    double t = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving) {
      const Eigen::VectorXd trial = params + t * step;
      const double ft = problem.value(trial);
      if (std::isfinite(ft) && ft <= f + 1e-4 * t * slope && ft < f) {
        params = trial;
        f = ft;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // No representable decrease left along the Newton direction.
      trace.converged = g.norm() < std::sqrt(options.gradient_tolerance);
      break;
    }
    trace.objective.push_back(f);
    ++trace.iterations;
  }
  if (!trace.converged && trace.iterations < options.max_iterations) {
    trace.converged = problem.gradient(params).norm() < options.gradient_tolerance;
  }
  return params;
}

}  // namespace

LogisticProblem::LogisticProblem(Eigen::MatrixXd x, Eigen::VectorXd targets,
                                 Eigen::VectorXd weights, double ridge, bool penalize_intercept)
    : x_(with_intercept_column(x)),
      targets_(std::move(targets)),
      weights_(std::move(weights)),
      ridge_(ridge),
      penalize_intercept_(penalize_intercept) {
  if (targets_.size() != x_.rows() || weights_.size() != x_.rows()) {
    throw std::invalid_argument("logistic problem: targets/weights do not match rows");
  }
  if (!(ridge_ >= 0.0) || !std::isfinite(ridge_)) {
    throw std::invalid_argument("logistic problem: ridge must be finite and >= 0");
  }
  if (!x_.allFinite()) throw FitError("non-finite feature values");
  if (!targets_.allFinite() || !weights_.allFinite()) {
    throw FitError("non-finite targets or weights");
  }
  if ((weights_.array() < 0.0).any()) throw std::invalid_argument("negative example weight");
  if ((targets_.array() < 0.0).any() || (targets_.array() > 1.0).any()) {
    throw std::invalid_argument("logistic targets must lie in [0, 1]");
  }
}

Eigen::VectorXd LogisticProblem::linear_predictor(const Eigen::VectorXd& params) const {
  return x_ * params;
}

double LogisticProblem::value(const Eigen::VectorXd& params) const {
  const Eigen::VectorXd z = linear_predictor(params);
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double w = weights_[i];
    if (w == 0.0) continue;
    const double y = targets_[i];
    total += w * (y * softplus(-z[i]) + (1.0 - y) * softplus(z[i]));
  }
  const Eigen::Index start = penalize_intercept_ ? 0 : 1;
  total += 0.5 * ridge_ * params.tail(params.size() - start).squaredNorm();
  return total;
}

Eigen::VectorXd LogisticProblem::gradient(const Eigen::VectorXd& params) const {
  const Eigen::VectorXd z = linear_predictor(params);
  Eigen::VectorXd residual(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    residual[i] = weights_[i] * (logistic(z[i]) - targets_[i]);
  }
  Eigen::VectorXd g = x_.transpose() * residual;
  const Eigen::Index start = penalize_intercept_ ? 0 : 1;
  g.tail(g.size() - start) += ridge_ * params.tail(params.size() - start);
  return g;
}

Eigen::MatrixXd LogisticProblem::hessian(const Eigen::VectorXd& params) const {
  const Eigen::VectorXd z = linear_predictor(params);
  Eigen::VectorXd curvature(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double p = logistic(z[i]);
    curvature[i] = weights_[i] * p * (1.0 - p);
  }
  Eigen::MatrixXd h = x_.transpose() * (x_.array().colwise() * curvature.array()).matrix();
  const Eigen::Index start = penalize_intercept_ ? 0 : 1;
  for (Eigen::Index k = start; k < h.rows(); ++k) h(k, k) += ridge_;
  return h;
}

MultinomialProblem::MultinomialProblem(Eigen::MatrixXd x, std::vector<std::size_t> labels,
                                       std::size_t num_classes, double ridge)
    : x_(with_intercept_column(x)),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      ridge_(ridge) {
  if (num_classes_ < 2) throw std::invalid_argument("multinomial logit needs >= 2 classes");
  if (static_cast<Eigen::Index>(labels_.size()) != x_.rows()) {
    throw std::invalid_argument("multinomial logit: labels do not match rows");
  }
  if (!x_.allFinite()) throw FitError("non-finite feature values");
  if (!(ridge_ >= 0.0) || !std::isfinite(ridge_)) {
    throw std::invalid_argument("multinomial logit: ridge must be finite and >= 0");
  }
  for (const auto label : labels_) {
    if (label >= num_classes_) throw std::invalid_argument("multinomial label out of range");
  }
}

Eigen::MatrixXd MultinomialProblem::probabilities(const Eigen::VectorXd& params) const {
  const Eigen::Index d = x_.cols();
  const Eigen::Index k1 = static_cast<Eigen::Index>(num_classes_) - 1;
  const Eigen::Map<const Eigen::MatrixXd> beta(params.data(), d, k1);
  Eigen::MatrixXd scores(x_.rows(), k1 + 1);
  scores.col(0).setZero();
  scores.rightCols(k1) = x_ * beta;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double top = scores.row(i).maxCoeff();
    scores.row(i) = (scores.row(i).array() - top).exp();
    scores.row(i) /= scores.row(i).sum();
  }
  return scores;
}

double MultinomialProblem::value(const Eigen::VectorXd& params) const {
  const Eigen::Index d = x_.cols();
  const Eigen::Index k1 = static_cast<Eigen::Index>(num_classes_) - 1;
  const Eigen::Map<const Eigen::MatrixXd> beta(params.data(), d, k1);
  const Eigen::MatrixXd scores = x_ * beta;
  double total = 0.0;
  for (Eigen::Index i = 0; i < x_.rows(); ++i) {
    double top = 0.0;
    for (Eigen::Index k = 0; k < k1; ++k) top = std::max(top, scores(i, k));
    double norm = std::exp(-top);
    for (Eigen::Index k = 0; k < k1; ++k) norm += std::exp(scores(i, k) - top);
    const double log_norm = top + std::log(norm);
    const std::size_t label = labels_[static_cast<std::size_t>(i)];
    const double own = label == 0 ? 0.0 : scores(i, static_cast<Eigen::Index>(label) - 1);
    total += log_norm - own;
  }
  total += 0.5 * ridge_ * beta.bottomRows(d - 1).squaredNorm();
  return total;
}

Eigen::VectorXd MultinomialProblem::gradient(const Eigen::VectorXd& params) const {
  const Eigen::Index d = x_.cols();
  const Eigen::Index k1 = static_cast<Eigen::Index>(num_classes_) - 1;
  Eigen::MatrixXd residual = probabilities(params).rightCols(k1);
  for (Eigen::Index i = 0; i < x_.rows(); ++i) {
    const std::size_t label = labels_[static_cast<std::size_t>(i)];
    if (label > 0) residual(i, static_cast<Eigen::Index>(label) - 1) -= 1.0;
  }
  Eigen::MatrixXd g = x_.transpose() * residual;
  const Eigen::Map<const Eigen::MatrixXd> beta(params.data(), d, k1);
  g.bottomRows(d - 1) += ridge_ * beta.bottomRows(d - 1);
  return Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
}

Eigen::MatrixXd MultinomialProblem::hessian(const Eigen::VectorXd& params) const {
  const Eigen::Index d = x_.cols();
  const Eigen::Index k1 = static_cast<Eigen::Index>(num_classes_) - 1;
  const Eigen::MatrixXd p = probabilities(params);
  Eigen::MatrixXd h(d * k1, d * k1);
  for (Eigen::Index a = 0; a < k1; ++a) {
    for (Eigen::Index b = a; b < k1; ++b) {
      Eigen::VectorXd c = -(p.col(a + 1).array() * p.col(b + 1).array()).matrix();
      if (a == b) c += p.col(a + 1);
      const Eigen::MatrixXd block =
          x_.transpose() * (x_.array().colwise() * c.array()).matrix();
      h.block(a * d, b * d, d, d) = block;
      if (a != b) h.block(b * d, a * d, d, d) = block.transpose();
    }
    for (Eigen::Index j = 1; j < d; ++j) h(a * d + j, a * d + j) += ridge_;
  }
  return h;
}

LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& targets,
                         const Eigen::VectorXd& weights, double ridge,
                         const NewtonOptions& options, bool penalize_intercept) {
  const LogisticProblem problem(x, targets, weights, ridge, penalize_intercept);
  LogisticFit fit;
  const Eigen::VectorXd params =
      minimize_newton(problem, Eigen::VectorXd::Zero(problem.dimension()), options, fit.trace);
  fit.intercept = params[0];
  fit.coefficients = params.tail(params.size() - 1);
  return fit;
}

MultinomialFit fit_multinomial(const Eigen::MatrixXd& x, std::span<const std::size_t> labels,
                               std::size_t num_classes, double ridge,
                               const NewtonOptions& options) {
  const MultinomialProblem problem(x, std::vector<std::size_t>(labels.begin(), labels.end()),
                                   num_classes, ridge);
  MultinomialFit fit;
  const Eigen::VectorXd params =
      minimize_newton(problem, Eigen::VectorXd::Zero(problem.dimension()), options, fit.trace);
  const Eigen::Index d = x.cols() + 1;
  fit.coefficients = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(num_classes), d);
  for (Eigen::Index k = 1; k < static_cast<Eigen::Index>(num_classes); ++k) {
    fit.coefficients.row(k) = params.segment((k - 1) * d, d).transpose();
  }
  return fit;
}

}  // namespace cbandit
