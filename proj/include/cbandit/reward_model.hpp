#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "cbandit/dataset.hpp"
#include "cbandit/logistic.hpp"

namespace cbandit {

/// Per-arm logistic reward approximator r(x, a) in (0, 1).
class RewardModel {
 public:
  RewardModel(FeatureSchema schema, Eigen::MatrixXd coefficients, Eigen::VectorXd intercepts,
              double lambda);
  // Every prediction is logistic(0) = 0.5.
  static RewardModel zero(FeatureSchema schema, double lambda = 0.0);

  const FeatureSchema& schema() const { return schema_; }
  std::size_t num_arms() const { return schema_.num_arms(); }
  // K x F
  const Eigen::MatrixXd& coefficients() const { return coefficients_; }
  const Eigen::VectorXd& intercepts() const { return intercepts_; }
  double lambda() const { return lambda_; }

  double predict(std::span<const double> context, std::size_t arm) const;
  // T x K matrix of predictions.
  Eigen::MatrixXd predict_matrix(const Eigen::MatrixXd& contexts) const;
  Eigen::MatrixXd predict_matrix(const Dataset& data) const;

  nlohmann::json to_json() const;
  static RewardModel from_json(const nlohmann::json& j);

 private:
  FeatureSchema schema_;
  Eigen::MatrixXd coefficients_;
  Eigen::VectorXd intercepts_;
  double lambda_;
};

struct RewardFit {
  RewardModel model;
  std::vector<OptimizerTrace> traces;  // one per arm
};

/// For each arm, an l2-regularized logistic regression of reward on context over the samples
/// logged with that arm (intercept unpenalized). Arms with single-class rewards still fit.
RewardFit fit_reward_models_traced(const Dataset& train, double lambda = 1.0);
RewardModel fit_reward_models(const Dataset& train, double lambda = 1.0);

}  // namespace cbandit
