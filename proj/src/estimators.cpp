#include "cbandit/estimators.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "cbandit/error.hpp"

namespace cbandit {
namespace {

PolicyValueEstimate summarize(EstimatorKind kind, double tau, std::vector<double> contributions,
                              bool self_normalized) {
  PolicyValueEstimate est;
  est.kind = kind;
  est.tau = tau;
  est.self_normalized = self_normalized;
  const double n = static_cast<double>(contributions.size());
  double sum = 0.0;
  for (const double c : contributions) sum += c;
  est.mean = sum / n;
  if (contributions.size() > 1) {
    double ss = 0.0;
    for (const double c : contributions) ss += (c - est.mean) * (c - est.mean);
    est.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  est.contributions = std::move(contributions);
  return est;
}

void check_shapes(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string("estimator inputs disagree in shape: ") + what);
  }
}

void check_log(const Eigen::MatrixXd& policy_probs, const LoggedBandit& log) {
  if (policy_probs.rows() == 0) throw std::invalid_argument("estimator needs at least one sample");
  if (static_cast<Eigen::Index>(log.actions.size()) != policy_probs.rows() ||
      log.rewards.size() != policy_probs.rows()) {
    throw std::invalid_argument("estimator inputs disagree on the sample count");
  }
  for (const auto a : log.actions) {
    if (a >= static_cast<std::size_t>(policy_probs.cols())) {
      throw std::invalid_argument("logged action out of range");
    }
  }
}

}  // namespace

std::string_view to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::kDM:
      return "DM";
    case EstimatorKind::kIPW:
      return "IPW";
    case EstimatorKind::kTIPW:
      return "tIPW";
    case EstimatorKind::kDR:
      return "DR";
  }
  return "?";
}

void to_json(nlohmann::json& j, const PolicyValueEstimate& estimate) {
  j = {{"estimator", to_string(estimate.kind)},
       {"tau", estimate.tau},
       {"mean", estimate.mean},
       {"std_error", estimate.std_error},
       {"T", estimate.contributions.size()},
       {"self_normalized", estimate.self_normalized}};
}

std::vector<double> importance_weights(const Eigen::MatrixXd& policy_probs,
                                       std::span<const std::size_t> actions,
                                       const Eigen::MatrixXd& propensities, double tau) {
  check_shapes(policy_probs, propensities, "policy vs propensities");
  check_tau(tau, static_cast<std::size_t>(policy_probs.cols()));
  std::vector<double> w(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const auto a = static_cast<Eigen::Index>(actions[i]);
    const double p = std::max(propensities(row, a), tau);
    const double pe = policy_probs(row, a);
    w[i] = pe == 0.0 ? 0.0 : pe / p;
  }
  return w;
}

PolicyValueEstimate value_dm(const Eigen::MatrixXd& policy_probs,
                             const Eigen::MatrixXd& reward_hat) {
  check_shapes(policy_probs, reward_hat, "policy vs reward model");
  if (policy_probs.rows() == 0) throw std::invalid_argument("estimator needs at least one sample");
  std::vector<double> c(static_cast<std::size_t>(policy_probs.rows()));
  for (Eigen::Index i = 0; i < policy_probs.rows(); ++i) {
    c[static_cast<std::size_t>(i)] = policy_probs.row(i).dot(reward_hat.row(i));
  }
  return summarize(EstimatorKind::kDM, 0.0, std::move(c), false);
}

PolicyValueEstimate value_tipw(const Eigen::MatrixXd& policy_probs, const LoggedBandit& log,
                               const Eigen::MatrixXd& propensities, double tau,
                               bool self_normalized) {
  check_log(policy_probs, log);
  const auto w = importance_weights(policy_probs, log.actions, propensities, tau);
  std::vector<double> c(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) c[i] = w[i] * log.rewards[static_cast<Eigen::Index>(i)];
  if (self_normalized) {
    double total = 0.0;
    for (const double wi : w) total += wi;
    const double scale = total > 0.0 ? static_cast<double>(w.size()) / total : 0.0;
    for (double& ci : c) ci *= scale;
  }
  return summarize(tau == 0.0 ? EstimatorKind::kIPW : EstimatorKind::kTIPW, tau, std::move(c),
                   self_normalized);
}

PolicyValueEstimate value_dr(const Eigen::MatrixXd& policy_probs, const LoggedBandit& log,
                             const Eigen::MatrixXd& reward_hat,
                             const Eigen::MatrixXd& propensities, double tau,
                             bool self_normalized) {
  check_log(policy_probs, log);
  check_shapes(policy_probs, reward_hat, "policy vs reward model");
  const auto w = importance_weights(policy_probs, log.actions, propensities, tau);
  double scale = 1.0;
  if (self_normalized) {
    double total = 0.0;
    for (const double wi : w) total += wi;
    scale = total > 0.0 ? static_cast<double>(w.size()) / total : 0.0;
  }
  std::vector<double> c(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const auto a = static_cast<Eigen::Index>(log.actions[i]);
    const double direct = policy_probs.row(row).dot(reward_hat.row(row));
    c[i] = direct + scale * w[i] * (log.rewards[row] - reward_hat(row, a));
  }
  return summarize(EstimatorKind::kDR, tau, std::move(c), self_normalized);
}

PolicyValueEstimate value_dm(const Policy& policy, const Dataset& data, const RewardModel& rm) {
  if (rm.num_arms() != data.num_arms()) throw DataError("reward model arm count mismatch");
  return value_dm(policy_matrix(policy, data), rm.predict_matrix(data));
}

PolicyValueEstimate value_tipw(const Policy& policy, const Dataset& data,
                               const PropensityModel& pm, double tau, bool self_normalized) {
  check_tau(tau, data.num_arms());
  const auto actions = data.actions();
  const Eigen::VectorXd rewards = data.rewards();
  return value_tipw(policy_matrix(policy, data), {actions, rewards}, pm.predict_matrix(data), tau,
                    self_normalized);
}

PolicyValueEstimate value_dr(const Policy& policy, const Dataset& data, const RewardModel& rm,
                             const PropensityModel& pm, double tau, bool self_normalized) {
  check_tau(tau, data.num_arms());
  const auto actions = data.actions();
  const Eigen::VectorXd rewards = data.rewards();
  return value_dr(policy_matrix(policy, data), {actions, rewards}, rm.predict_matrix(data),
                  pm.predict_matrix(data), tau, self_normalized);
}

}  // namespace cbandit
