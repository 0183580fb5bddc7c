#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace cbandit {

struct NewtonOptions {
  double gradient_tolerance = 1e-6;
  int max_iterations = 500;
};

/// Objective value after each accepted Newton step, starting with the initial point.
struct OptimizerTrace {
  std::vector<double> objective;
  int iterations = 0;
  bool converged = false;
};

/// Weighted binary cross-entropy with fractional targets and an l2 penalty:
///
///   f(b, w) = sum_i weight_i * [ -y_i log s(z_i) - (1 - y_i) log(1 - s(z_i)) ] + ridge/2 |w|^2
///
/// with z_i = b + w . x_i and s the logistic function. Parameters are laid out as
/// [b, w_1, ..., w_F]; the intercept b is unpenalized unless requested.
class LogisticProblem {
 public:
  LogisticProblem(Eigen::MatrixXd x, Eigen::VectorXd targets, Eigen::VectorXd weights,
                  double ridge, bool penalize_intercept = false);

  Eigen::Index dimension() const { return x_.cols(); }
  double value(const Eigen::VectorXd& params) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& params) const;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& params) const;

 private:
  Eigen::VectorXd linear_predictor(const Eigen::VectorXd& params) const;

  Eigen::MatrixXd x_;
  Eigen::VectorXd targets_;
  Eigen::VectorXd weights_;
  double ridge_;
  bool penalize_intercept_;
};

/// Ridge-penalized multinomial logit with arm 0 as the reference class.
///
/// Parameters are stacked per non-reference class k = 1..K-1 as [b_k, w_k1, ..., w_kF];
/// slopes are penalized, intercepts are not.
class MultinomialProblem {
 public:
  MultinomialProblem(Eigen::MatrixXd x, std::vector<std::size_t> labels, std::size_t num_classes,
                     double ridge);

  Eigen::Index dimension() const {
    return static_cast<Eigen::Index>(num_classes_ - 1) * x_.cols();
  }
  double value(const Eigen::VectorXd& params) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& params) const;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& params) const;

  // T x K class probabilities at params.
  Eigen::MatrixXd probabilities(const Eigen::VectorXd& params) const;

 private:
  Eigen::MatrixXd x_;
  std::vector<std::size_t> labels_;
  std::size_t num_classes_;
  double ridge_;
};

struct LogisticFit {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;
  OptimizerTrace trace;
};

// Damped Newton with Armijo backtracking; every accepted step strictly lowers the objective.
LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& targets,
                         const Eigen::VectorXd& weights, double ridge,
                         const NewtonOptions& options = {}, bool penalize_intercept = false);

struct MultinomialFit {
  // K x (F + 1); row 0 is the all-zero reference class, column 0 the intercepts.
  Eigen::MatrixXd coefficients;
  OptimizerTrace trace;
};

MultinomialFit fit_multinomial(const Eigen::MatrixXd& x, std::span<const std::size_t> labels,
                               std::size_t num_classes, double ridge,
                               const NewtonOptions& options = {});

double logistic(double z);
// log(1 + exp(z)) without overflow.
double softplus(double z);
// In-place softmax of a score vector.
void softmax_inplace(std::span<double> scores);

}  // namespace cbandit
