#include "cbandit/learners.hpp"

#include <algorithm>
#include <cmath>

#include "cbandit/error.hpp"

namespace cbandit {

std::string_view to_string(ImputationMethod method) {
  switch (method) {
    case ImputationMethod::kDM:
      return "DM";
    case ImputationMethod::kIPW:
      return "IPW";
    case ImputationMethod::kDR:
      return "DR";
  }
  return "?";
}

ImputedRewardMatrix impute_rewards(std::span<const std::size_t> actions,
                                   const Eigen::VectorXd& rewards, ImputationMethod method,
                                   const Eigen::MatrixXd* reward_hat,
                                   const Eigen::MatrixXd* propensities, double tau) {
  const bool needs_rm = method != ImputationMethod::kIPW;
  const bool needs_pm = method != ImputationMethod::kDM;
  if (needs_rm && reward_hat == nullptr) {
    throw std::invalid_argument(std::string(to_string(method)) +
                                " imputation requires a reward model");
  }
  if (needs_pm && propensities == nullptr) {
    throw std::invalid_argument(std::string(to_string(method)) +
                                " imputation requires a propensity model");
  }
  const auto t = static_cast<Eigen::Index>(actions.size());
  if (rewards.size() != t) throw std::invalid_argument("rewards do not match actions");
  const Eigen::MatrixXd* shape = needs_rm ? reward_hat : propensities;
  if (shape->rows() != t) throw std::invalid_argument("model matrix does not match sample count");
  const auto k = shape->cols();
  if (needs_rm && needs_pm && (propensities->rows() != t || propensities->cols() != k)) {
    throw std::invalid_argument("reward and propensity matrices disagree in shape");
  }
  check_tau(tau, static_cast<std::size_t>(k));

  ImputedRewardMatrix out;
  out.method = method;
  out.tau = tau;
  out.values = needs_rm ? *reward_hat : Eigen::MatrixXd::Zero(t, k);
  if (method == ImputationMethod::kDM) return out;

  for (Eigen::Index i = 0; i < t; ++i) {
    const auto a = static_cast<Eigen::Index>(actions[static_cast<std::size_t>(i)]);
    if (a >= k) throw std::invalid_argument("logged action out of range");
    const double p = std::max((*propensities)(i, a), tau);
    if (!(p > 0.0)) throw FitError("zero propensity at a logged action with tau = 0");
    if (method == ImputationMethod::kIPW) {
      out.values(i, a) = rewards[i] / p;
    } else {
      const double rhat = (*reward_hat)(i, a);
      out.values(i, a) = rhat + (rewards[i] - rhat) / p;
    }
  }
  return out;
}

ImputedRewardMatrix impute_rewards(const Dataset& data, ImputationMethod method,
                                   const RewardModel* rm, const PropensityModel* pm, double tau) {
  if (method != ImputationMethod::kIPW && rm == nullptr) {
    throw std::invalid_argument(std::string(to_string(method)) +
                                " imputation requires a reward model");
  }
  if (method != ImputationMethod::kDM && pm == nullptr) {
    throw std::invalid_argument(std::string(to_string(method)) +
                                " imputation requires a propensity model");
  }
  const Eigen::MatrixXd x = data.context_matrix();
  Eigen::MatrixXd rhat;
  Eigen::MatrixXd props;
  if (rm != nullptr) rhat = rm->predict_matrix(x);
  if (pm != nullptr) props = pm->predict_matrix(x);
  const auto actions = data.actions();
  return impute_rewards(actions, data.rewards(), method, rm ? &rhat : nullptr,
                        pm ? &props : nullptr, tau);
}

LinearPolicy fit_policy(const ImputedRewardMatrix& imputed, const Eigen::MatrixXd& contexts,
                        const FeatureSchema& schema, double lambda, const NewtonOptions& options) {
  const Eigen::MatrixXd& v = imputed.values;
  if (!v.allFinite()) throw FitError("imputed reward matrix has non-finite entries");
  if (v.rows() != contexts.rows()) throw std::invalid_argument("contexts do not match rewards");
  if (v.cols() != static_cast<Eigen::Index>(schema.num_arms()) ||
      contexts.cols() != static_cast<Eigen::Index>(schema.num_features())) {
    throw std::invalid_argument("imputed rewards do not match the schema");
  }

  const double lo = std::min(0.0, v.minCoeff());
  const double hi = std::max(1.0, v.maxCoeff());
  const Eigen::MatrixXd y = ((v.array() - lo) / (hi - lo)).cwiseMax(0.0).cwiseMin(1.0).matrix();

  const auto k = v.cols();
  const auto f = contexts.cols();
  Eigen::MatrixXd coefs = Eigen::MatrixXd::Zero(k, f);
  Eigen::VectorXd intercepts(k);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(v.rows());
  for (Eigen::Index a = 0; a < k; ++a) {
    const auto column = y.col(a);
    if (column.maxCoeff() == column.minCoeff()) {
      constexpr double kFloor = 1e-12;
      const double target = std::clamp(column[0], kFloor, 1.0 - kFloor);
      intercepts[a] = std::log(target / (1.0 - target));
      continue;
    }
    const auto fit = fit_logistic(contexts, column, ones, lambda, options);
    intercepts[a] = fit.intercept;
    coefs.row(a) = fit.coefficients.transpose();
  }
  return LinearPolicy(schema, std::move(coefs), std::move(intercepts));
}

OffsetTreePolicy fit_offset_tree(const Dataset& data, const Eigen::MatrixXd& propensities,
                                 double tau, double lambda, const NewtonOptions& options) {
  const std::size_t k = data.num_arms();
  check_tau(tau, k);
  if (propensities.rows() != static_cast<Eigen::Index>(data.size()) ||
      propensities.cols() != static_cast<Eigen::Index>(k)) {
    throw std::invalid_argument("propensity matrix does not match the dataset");
  }
  auto nodes = OffsetTreePolicy::build_shape(k, data.num_features());
  const auto f = static_cast<Eigen::Index>(data.num_features());

  for (auto& node : nodes) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto a = data[i].action;
      if (a >= node.first_arm && a < node.end_arm) members.push_back(i);
    }
    const auto n = static_cast<Eigen::Index>(members.size());
    Eigen::MatrixXd x(n, f);
    Eigen::VectorXd labels(n);
    Eigen::VectorXd weights(n);
    for (Eigen::Index m = 0; m < n; ++m) {
      const auto& s = data[members[static_cast<std::size_t>(m)]];
      for (Eigen::Index c = 0; c < f; ++c) x(m, c) = s.context[static_cast<std::size_t>(c)];
      const double side = s.action >= node.split_arm ? 1.0 : 0.0;
      const double r = static_cast<double>(s.reward);
      labels[m] = r > 0.5 ? side : 1.0 - side;
      const double p = std::max(
          propensities(static_cast<Eigen::Index>(members[static_cast<std::size_t>(m)]),
                       static_cast<Eigen::Index>(s.action)),
          tau);
      if (!(p > 0.0)) throw FitError("zero propensity at a logged action with tau = 0");
      weights[m] = std::abs(r - 0.5) / p;
    }
    if (n == 0 || weights.sum() <= 0.0) continue;
    const auto fit = fit_logistic(x, labels, weights, lambda, options);
    node.trained = true;
    node.intercept = fit.intercept;
    node.coefficients = fit.coefficients;
  }
  return OffsetTreePolicy(data.schema(), std::move(nodes));
}

OffsetTreePolicy fit_offset_tree(const Dataset& data, const PropensityModel& pm, double tau,
                                 double lambda) {
  return fit_offset_tree(data, pm.predict_matrix(data), tau, lambda);
}

}  // namespace cbandit
