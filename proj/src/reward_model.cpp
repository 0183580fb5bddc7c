#include "cbandit/reward_model.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "cbandit/error.hpp"

namespace cbandit {

RewardModel::RewardModel(FeatureSchema schema, Eigen::MatrixXd coefficients,
                         Eigen::VectorXd intercepts, double lambda)
    : schema_(std::move(schema)),
      coefficients_(std::move(coefficients)),
      intercepts_(std::move(intercepts)),
      lambda_(lambda) {
  if (coefficients_.rows() != static_cast<Eigen::Index>(schema_.num_arms()) ||
      coefficients_.cols() != static_cast<Eigen::Index>(schema_.num_features()) ||
      intercepts_.size() != static_cast<Eigen::Index>(schema_.num_arms())) {
    throw DataError("reward model coefficients do not match the schema");
  }
}

RewardModel RewardModel::zero(FeatureSchema schema, double lambda) {
  const auto k = static_cast<Eigen::Index>(schema.num_arms());
  const auto f = static_cast<Eigen::Index>(schema.num_features());
  return RewardModel(std::move(schema), Eigen::MatrixXd::Zero(k, f), Eigen::VectorXd::Zero(k),
                     lambda);
}

double RewardModel::predict(std::span<const double> context, std::size_t arm) const {
  if (arm >= num_arms()) throw std::out_of_range("arm index out of range");
  if (context.size() != schema_.num_features()) {
    throw DataError("context has " + std::to_string(context.size()) +
                    " features, reward model expects " + std::to_string(schema_.num_features()));
  }
  const auto row = static_cast<Eigen::Index>(arm);
  double z = intercepts_[row];
  for (std::size_t j = 0; j < context.size(); ++j) {
    z += coefficients_(row, static_cast<Eigen::Index>(j)) * context[j];
  }
  return logistic(z);
}

Eigen::MatrixXd RewardModel::predict_matrix(const Eigen::MatrixXd& contexts) const {
  if (contexts.cols() != coefficients_.cols()) throw DataError("context matrix has wrong width");
  Eigen::MatrixXd z = contexts * coefficients_.transpose();
  z.rowwise() += intercepts_.transpose();
  return z.unaryExpr([](double v) { return logistic(v); });
}

Eigen::MatrixXd RewardModel::predict_matrix(const Dataset& data) const {
  return predict_matrix(data.context_matrix());
}

nlohmann::json RewardModel::to_json() const {
  nlohmann::json arms = nlohmann::json::object();
  for (std::size_t a = 0; a < num_arms(); ++a) {
    const auto r = static_cast<Eigen::Index>(a);
    nlohmann::json coefs = nlohmann::json::object();
    for (std::size_t f = 0; f < schema_.num_features(); ++f) {
      coefs[schema_.names()[f]] = coefficients_(r, static_cast<Eigen::Index>(f));
    }
    arms[schema_.arm_names()[a]] = {
        {"intercept", intercepts_[r]}, {"coefficients", std::move(coefs)}, {"lambda", lambda_}};
  }
  return {{"version", 1}, {"schema", schema_}, {"arms", std::move(arms)}};
}

RewardModel RewardModel::from_json(const nlohmann::json& j) {
  try {
    auto schema = j.at("schema").get<FeatureSchema>();
    const auto k = static_cast<Eigen::Index>(schema.num_arms());
    const auto f = static_cast<Eigen::Index>(schema.num_features());
    Eigen::MatrixXd coefs(k, f);
    Eigen::VectorXd intercepts(k);
    double lambda = 0.0;
    for (Eigen::Index a = 0; a < k; ++a) {
      const auto& arm = j.at("arms").at(schema.arm_names()[static_cast<std::size_t>(a)]);
      intercepts[a] = arm.at("intercept").get<double>();
      lambda = arm.at("lambda").get<double>();
      for (Eigen::Index c = 0; c < f; ++c) {
        coefs(a, c) = arm.at("coefficients").at(schema.names()[static_cast<std::size_t>(c)]);
      }
    }
    return RewardModel(std::move(schema), std::move(coefs), std::move(intercepts), lambda);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid reward model JSON: ") + e.what());
  }
}

RewardFit fit_reward_models_traced(const Dataset& train, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("reward model lambda must be finite and >= 0");
  }
  const auto k = train.num_arms();
  const auto f = static_cast<Eigen::Index>(train.num_features());
  const auto counts = train.arm_counts();
  for (std::size_t a = 0; a < k; ++a) {
    if (counts[a] == 0) {
      throw FitError("reward model: arm '" + train.schema().arm_names()[a] +
                     "' has no training samples");
    }
  }

  Eigen::MatrixXd coefs(static_cast<Eigen::Index>(k), f);
  Eigen::VectorXd intercepts(static_cast<Eigen::Index>(k));
  std::vector<OptimizerTrace> traces;
  for (std::size_t a = 0; a < k; ++a) {
    const auto n = static_cast<Eigen::Index>(counts[a]);
    Eigen::MatrixXd x(n, f);
    Eigen::VectorXd y(n);
    Eigen::Index row = 0;
    for (const auto& s : train.samples()) {
      if (s.action != a) continue;
      for (Eigen::Index c = 0; c < f; ++c) x(row, c) = s.context[static_cast<std::size_t>(c)];
      y[row] = s.reward;
      ++row;
    }
    auto fit = fit_logistic(x, y, Eigen::VectorXd::Ones(n), lambda);
    coefs.row(static_cast<Eigen::Index>(a)) = fit.coefficients.transpose();
    intercepts[static_cast<Eigen::Index>(a)] = fit.intercept;
    traces.push_back(std::move(fit.trace));
  }
  return {RewardModel(train.schema(), std::move(coefs), std::move(intercepts), lambda),
          std::move(traces)};
}

RewardModel fit_reward_models(const Dataset& train, double lambda) {
  return fit_reward_models_traced(train, lambda).model;
}

}  // namespace cbandit
