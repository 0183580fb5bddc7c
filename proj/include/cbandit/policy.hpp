#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "cbandit/dataset.hpp"
#include "cbandit/propensity.hpp"

namespace cbandit {

/// A target policy pi_e(a | x).
///
/// The logged action is passed along so that the observed-policy baseline can reproduce the
/// log; every other policy ignores it.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::size_t num_arms() const = 0;
  virtual void probabilities(std::span<const double> context, std::size_t logged_action,
                             std::span<double> out) const = 0;

  std::vector<double> probabilities(std::span<const double> context,
                                    std::size_t logged_action) const;
};

// T x K matrix of pi_e(a | x_i) over a dataset.
Eigen::MatrixXd policy_matrix(const Policy& policy, const Dataset& data);

class DeterministicPolicy : public Policy {
 public:
  virtual std::size_t decide(std::span<const double> context) const = 0;
  void probabilities(std::span<const double> context, std::size_t logged_action,
                     std::span<double> out) const final;
};

/// argmax_a (intercept_a + coefficients_a . x), ties to the lowest arm index.
class LinearPolicy final : public DeterministicPolicy {
 public:
  LinearPolicy(FeatureSchema schema, Eigen::MatrixXd coefficients, Eigen::VectorXd intercepts);

  std::size_t num_arms() const override { return schema_.num_arms(); }
  std::size_t decide(std::span<const double> context) const override;
  Eigen::VectorXd scores(std::span<const double> context) const;

  const FeatureSchema& schema() const { return schema_; }
  // K x F
  const Eigen::MatrixXd& coefficients() const { return coefficients_; }
  const Eigen::VectorXd& intercepts() const { return intercepts_; }

  nlohmann::json to_json() const;
  static LinearPolicy from_json(const nlohmann::json& j);

 private:
  FeatureSchema schema_;
  Eigen::MatrixXd coefficients_;
  Eigen::VectorXd intercepts_;
};

/// Balanced binary tournament over the arms in index order. Each internal node holds a
/// logistic classifier; a positive score routes right.
class OffsetTreePolicy final : public DeterministicPolicy {
 public:
  struct Node {
    std::size_t first_arm = 0;  // arms [first_arm, end_arm)
    std::size_t split_arm = 0;  // left side is [first_arm, split_arm)
    std::size_t end_arm = 0;
    int left = -1;   // child node id, or -1 when the left side is the single arm first_arm
    int right = -1;  // child node id, or -1 when the right side is the single arm split_arm
    bool trained = false;  // untrained nodes route left
    double intercept = 0.0;
    Eigen::VectorXd coefficients;
  };

  // Untrained tree shape for K arms and F features; node 0 is the root.
  static std::vector<Node> build_shape(std::size_t num_arms, std::size_t num_features);

  OffsetTreePolicy(FeatureSchema schema, std::vector<Node> nodes);

  std::size_t num_arms() const override { return schema_.num_arms(); }
  std::size_t decide(std::span<const double> context) const override;
  // decide() plus the number of classifiers consulted on the way down.
  std::pair<std::size_t, std::size_t> route(std::span<const double> context) const;
  std::size_t depth() const;

  const FeatureSchema& schema() const { return schema_; }
  const std::vector<Node>& nodes() const { return nodes_; }

  nlohmann::json to_json() const;
  static OffsetTreePolicy from_json(const nlohmann::json& j);

 private:
  FeatureSchema schema_;
  std::vector<Node> nodes_;
};

enum class BaselineKind { kRandom, kObserved };

/// random: 1/K everywhere. observed: probability 1 on the logged action of each sample.
class BaselinePolicy final : public Policy {
 public:
  BaselinePolicy(BaselineKind kind, std::size_t num_arms);

  BaselineKind kind() const { return kind_; }
  std::size_t num_arms() const override { return num_arms_; }
  void probabilities(std::span<const double> context, std::size_t logged_action,
                     std::span<double> out) const override;

 private:
  BaselineKind kind_;
  std::size_t num_arms_;
};

BaselinePolicy make_baseline(BaselineKind kind, std::size_t num_arms);

/// The estimated behavior policy used as a stochastic target policy.
class BehaviorPolicy final : public Policy {
 public:
  explicit BehaviorPolicy(std::shared_ptr<const PropensityModel> model);

  std::size_t num_arms() const override { return model_->num_arms(); }
  void probabilities(std::span<const double> context, std::size_t logged_action,
                     std::span<double> out) const override;

 private:
  std::shared_ptr<const PropensityModel> model_;
};

}  // namespace cbandit
