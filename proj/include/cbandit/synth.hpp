#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "cbandit/dataset.hpp"
#include "cbandit/policy.hpp"

namespace cbandit {

/// Small deterministic generator used by the simulator. Draws depend only on the seed, never on
/// the standard library's distribution implementations.
class SplitMix {
 public:
  explicit SplitMix(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  double uniform();  // [0, 1)
  double normal();
  std::size_t categorical(std::span<const double> probabilities);

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct SynthConfig {
  std::size_t num_samples = 1000;
  std::size_t num_arms = 10;
  std::size_t num_binary = 20;
  std::size_t num_continuous = 20;
  // Features with non-zero reward coefficients; the rest have none.
  std::size_t num_informative = 3;
  // Std of the planted per-arm reward coefficients on informative features.
  double reward_effect_scale = 2.0;
  double reward_intercept_scale = 0.5;
  // Std of the behavior-policy logit coefficients (all features).
  double behavior_strength = 0.5;
  // Rewards are flipped with this probability: mu = noise + (1 - 2 noise) * logistic(...).
  double noise_level = 0.0;
  // Adds per-arm quadratic terms to the reward logit so a linear reward model is wrong.
  bool misspecified = false;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& config);
void from_json(const nlohmann::json& j, SynthConfig& config);

/// Explicit data-generating process: independent features, a linear-logit behavior policy,
/// and a (possibly quadratic) logit expected reward.
class GroundTruth {
 public:
  GroundTruth(FeatureSchema schema, std::vector<double> binary_rates,
              Eigen::MatrixXd behavior_coefficients, Eigen::VectorXd behavior_intercepts,
              Eigen::MatrixXd reward_coefficients, Eigen::VectorXd reward_intercepts,
              Eigen::MatrixXd reward_quadratic, double noise_level,
              std::vector<std::size_t> informative);

  const FeatureSchema& schema() const { return schema_; }
  std::size_t num_arms() const { return schema_.num_arms(); }
  std::size_t num_features() const { return schema_.num_features(); }
  const std::vector<std::size_t>& informative_features() const { return informative_; }
  const Eigen::MatrixXd& reward_coefficients() const { return reward_coefficients_; }
  const Eigen::VectorXd& reward_intercepts() const { return reward_intercepts_; }
  const Eigen::MatrixXd& behavior_coefficients() const { return behavior_coefficients_; }
  const Eigen::VectorXd& behavior_intercepts() const { return behavior_intercepts_; }

  void sample_context(SplitMix& rng, std::span<double> out) const;
  void behavior_logits(std::span<const double> context, std::span<double> out) const;
  void behavior_probabilities(std::span<const double> context, std::span<double> out) const;
  double expected_reward(std::span<const double> context, std::size_t arm) const;

  // T x K matrices over a dataset's contexts.
  Eigen::MatrixXd propensity_matrix(const Dataset& data) const;
  Eigen::MatrixXd reward_matrix(const Dataset& data) const;
  // Behavior logits plus N(0, noise_std^2) per cell, renormalized.
  Eigen::MatrixXd perturbed_propensity_matrix(const Dataset& data, double noise_std,
                                              std::uint64_t seed) const;

  nlohmann::json to_json() const;
  static GroundTruth from_json(const nlohmann::json& j);

 private:
  FeatureSchema schema_;
  std::vector<double> binary_rates_;
  Eigen::MatrixXd behavior_coefficients_;
  Eigen::VectorXd behavior_intercepts_;
  Eigen::MatrixXd reward_coefficients_;
  Eigen::VectorXd reward_intercepts_;
  Eigen::MatrixXd reward_quadratic_;
  double noise_level_;
  std::vector<std::size_t> informative_;
};

GroundTruth make_ground_truth(const SynthConfig& config);

// x ~ contexts, a ~ pi_b(. | x), r ~ Bernoulli(mu(x, a)); effectiveness is 10 r.
Dataset sample_dataset(const GroundTruth& truth, std::size_t num_samples, std::uint64_t seed);

struct SynthResult {
  Dataset data;
  GroundTruth truth;
};

SynthResult generate(const SynthConfig& config);

struct TrueValue {
  double value = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo policy value: mean over fresh contexts of sum_a pi(a | x) mu(x, a). A logged
/// action drawn from the behavior policy is passed to the policy for each context.
TrueValue true_value(const Policy& policy, const GroundTruth& truth, std::size_t n_mc,
                     std::uint64_t seed);

/// argmax_a mu(x, a), ties to the lowest arm.
class OraclePolicy final : public DeterministicPolicy {
 public:
  explicit OraclePolicy(const GroundTruth& truth) : truth_(&truth) {}
  std::size_t num_arms() const override { return truth_->num_arms(); }
  std::size_t decide(std::span<const double> context) const override;

 private:
  const GroundTruth* truth_;
};

/// The true behavior policy pi_b as a stochastic target policy.
class TrueBehaviorPolicy final : public Policy {
 public:
  explicit TrueBehaviorPolicy(const GroundTruth& truth) : truth_(&truth) {}
  std::size_t num_arms() const override { return truth_->num_arms(); }
  void probabilities(std::span<const double> context, std::size_t logged_action,
                     std::span<double> out) const override;

 private:
  const GroundTruth* truth_;
};

}  // namespace cbandit
