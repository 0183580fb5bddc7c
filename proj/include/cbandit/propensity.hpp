#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "cbandit/dataset.hpp"

namespace cbandit {

enum class PropensityKind { kBoostedTrees, kMultinomialLogit };
enum class BalanceAggregation { kMean, kMax };

struct BoostingConfig {
  std::size_t max_iterations = 5000;
  std::size_t tree_depth = 3;
  double shrinkage = 0.05;
  std::size_t min_samples_leaf = 10;
  // Balance is evaluated at iteration 1, every checkpoint_interval iterations, and at the end.
  std::size_t checkpoint_interval = 50;
  // Quantile bins per feature for split search (at most 255).
  std::size_t max_bins = 64;
  BalanceAggregation aggregation = BalanceAggregation::kMean;

  void validate() const;
};

struct BalanceCurvePoint {
  std::size_t iteration = 0;
  double summary = 0.0;
};

/// Absolute standardized mean differences, one per (feature, arm) in one-vs-rest form.
struct BalanceReport {
  std::vector<std::string> features;
  std::vector<std::string> arms;
  std::vector<std::vector<double>> asmd;  // [feature][arm]
  double mean = 0.0;
  double max = 0.0;
  // Summary statistic at each boosting checkpoint; empty outside boosting.
  std::vector<BalanceCurvePoint> iteration_curve;

  double summary(BalanceAggregation aggregation) const {
    return aggregation == BalanceAggregation::kMax ? max : mean;
  }
};

void to_json(nlohmann::json& j, const BalanceReport& report);

/// A depth-limited regression tree. Node 0 is the root; a node with feature < 0 is a leaf.
struct RegressionTree {
  struct Node {
    int feature = -1;
    double threshold = 0.0;  // x[feature] <= threshold goes left
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  std::vector<Node> nodes;

  double predict(std::span<const double> x) const;
  std::size_t depth() const;
};

/// Estimated behavior policy: context -> probability simplex over the K arms.
class PropensityModel {
 public:
  // Multinomial logit from a K x (F + 1) coefficient matrix (column 0 holds intercepts).
  static PropensityModel logit(FeatureSchema schema, Eigen::MatrixXd coefficients);
  static PropensityModel boosted(FeatureSchema schema, std::vector<double> initial_scores,
                                 double shrinkage, std::vector<std::vector<RegressionTree>> trees);
  // Predicts 1/K for every arm.
  static PropensityModel uniform(FeatureSchema schema);

  PropensityKind kind() const { return kind_; }
  const FeatureSchema& schema() const { return schema_; }
  std::size_t num_arms() const { return schema_.num_arms(); }
  // Boosting iterations kept in the model (0 for logit models).
  std::size_t chosen_iteration() const { return trees_.size(); }
  const Eigen::MatrixXd& logit_coefficients() const { return logit_coefficients_; }

  std::vector<double> predict(std::span<const double> context) const;
  void predict_into(std::span<const double> context, std::span<double> out) const;
  // T x K propensity matrix, row i matching predict(row i of contexts).
  Eigen::MatrixXd predict_matrix(const Eigen::MatrixXd& contexts) const;
  Eigen::MatrixXd predict_matrix(const Dataset& data) const;

  nlohmann::json to_json() const;
  static PropensityModel from_json(const nlohmann::json& j);

 private:
  PropensityModel() = default;

  PropensityKind kind_ = PropensityKind::kMultinomialLogit;
  FeatureSchema schema_;
  Eigen::MatrixXd logit_coefficients_;
  std::vector<double> initial_scores_;
  double shrinkage_ = 0.0;
  std::vector<std::vector<RegressionTree>> trees_;  // [iteration][arm]
};

struct PropensityFit {
  PropensityModel model;
  BalanceReport balance;
};

/// Multiclass gradient boosting on the softmax deviance. The kept iteration minimizes the
/// balance summary under inverse-propensity weights among the checkpoints (ties go to the
/// earlier iteration); the returned report describes that iteration and carries the curve.
PropensityFit fit_gbm_propensity(const Dataset& data, const BoostingConfig& config = {});

// Ridge-penalized multinomial logit fit by Newton's method.
PropensityModel fit_multinomial_logit(const Dataset& data, double ridge = 1.0);

// max(p, tau); throws TauBoundError unless 0 <= tau < 1/num_arms.
double clip_propensity(double p, double tau, std::size_t num_arms);

/// One-vs-rest ASMD per feature and arm:
///   |weighted mean among samples logged with the arm - weighted mean among the rest|
///   / population standard deviation of the feature over all samples (unweighted).
/// Zero-variance features and arms with an empty side report 0.
BalanceReport asmd(const Dataset& data, std::span<const double> weights);

// 1 / p(a_i | x_i) for each sample.
std::vector<double> inverse_propensity_weights(const Eigen::MatrixXd& propensities,
                                               std::span<const std::size_t> actions);

}  // namespace cbandit
