#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "cbandit/dataset.hpp"
#include "cbandit/policy.hpp"
#include "cbandit/propensity.hpp"
#include "cbandit/reward_model.hpp"

namespace cbandit {

enum class EstimatorKind { kDM, kIPW, kTIPW, kDR };

std::string_view to_string(EstimatorKind kind);

/// Off-policy value estimate. `mean` is the average of `contributions`; std_error is the
/// sample standard deviation of the contributions over sqrt(T).
struct PolicyValueEstimate {
  EstimatorKind kind = EstimatorKind::kDM;
  double tau = 0.0;
  double mean = 0.0;
  double std_error = 0.0;
  std::vector<double> contributions;
  bool self_normalized = false;
};

// JSON row {estimator, tau, mean, std_error, T}.
void to_json(nlohmann::json& j, const PolicyValueEstimate& estimate);

/// Inputs shared by the matrix-level estimators. All matrices are T x K.
struct LoggedBandit {
  std::span<const std::size_t> actions;
  const Eigen::VectorXd& rewards;
};

// pi_e(a_i | x_i) / max(p(a_i | x_i), tau) per sample.
std::vector<double> importance_weights(const Eigen::MatrixXd& policy_probs,
                                       std::span<const std::size_t> actions,
                                       const Eigen::MatrixXd& propensities, double tau);

// Contribution_i = sum_a pi_e(a | x_i) r(x_i, a).
PolicyValueEstimate value_dm(const Eigen::MatrixXd& policy_probs,
                             const Eigen::MatrixXd& reward_hat);

// Contribution_i = pi_e(a_i | x_i) r_i / max(p(a_i | x_i), tau). Unnormalized unless asked;
// the self-normalized form rescales contributions so their mean is sum(w r) / sum(w).
PolicyValueEstimate value_tipw(const Eigen::MatrixXd& policy_probs, const LoggedBandit& log,
                               const Eigen::MatrixXd& propensities, double tau,
                               bool self_normalized = false);

// Contribution_i = sum_a pi_e(a | x_i) r(x_i, a) + w_i (r_i - r(x_i, a_i)).
PolicyValueEstimate value_dr(const Eigen::MatrixXd& policy_probs, const LoggedBandit& log,
                             const Eigen::MatrixXd& reward_hat,
                             const Eigen::MatrixXd& propensities, double tau,
                             bool self_normalized = false);

PolicyValueEstimate value_dm(const Policy& policy, const Dataset& data, const RewardModel& rm);
PolicyValueEstimate value_tipw(const Policy& policy, const Dataset& data,
                               const PropensityModel& pm, double tau,
                               bool self_normalized = false);
PolicyValueEstimate value_dr(const Policy& policy, const Dataset& data, const RewardModel& rm,
                             const PropensityModel& pm, double tau,
                             bool self_normalized = false);

}  // namespace cbandit
