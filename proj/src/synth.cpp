#include "cbandit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <nlohmann/json.hpp>

#include "cbandit/error.hpp"
#include "cbandit/logistic.hpp"

namespace cbandit {
namespace {

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<Eigen::Index>(rows[r].size()) != m.cols()) throw DataError("ragged matrix");
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return m;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<double> vector_of(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd eigen_of(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::uint64_t SplitMix::next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double SplitMix::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double SplitMix::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::size_t SplitMix::categorical(std::span<const double> probabilities) {
  const double u = uniform();
  double cumulative = 0.0;
  for (std::size_t a = 0; a < probabilities.size(); ++a) {
    cumulative += probabilities[a];
    if (u < cumulative) return a;
  }
  return probabilities.size() - 1;
}

void SynthConfig::validate() const {
  if (num_samples < 1) throw DataError("synthetic config needs T >= 1");
  if (num_arms < 2) throw DataError("synthetic config needs K >= 2");
  if (num_binary + num_continuous < 1) throw DataError("synthetic config needs a feature");
  if (num_informative > num_binary + num_continuous) {
    throw DataError("more informative features than features");
  }
  if (!(noise_level >= 0.0 && noise_level < 0.5)) throw DataError("noise_level must be in [0, 0.5)");
  if (!(reward_effect_scale >= 0.0) || !(behavior_strength >= 0.0) ||
      !(reward_intercept_scale >= 0.0)) {
    throw DataError("synthetic scales must be non-negative");
  }
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = {{"num_samples", c.num_samples},
       {"num_arms", c.num_arms},
       {"num_binary", c.num_binary},
       {"num_continuous", c.num_continuous},
       {"num_informative", c.num_informative},
       {"reward_effect_scale", c.reward_effect_scale},
       {"reward_intercept_scale", c.reward_intercept_scale},
       {"behavior_strength", c.behavior_strength},
       {"noise_level", c.noise_level},
       {"misspecified", c.misspecified},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  const SynthConfig defaults;
  try {
    c.num_samples = j.value("num_samples", defaults.num_samples);
    c.num_arms = j.value("num_arms", defaults.num_arms);
    c.num_binary = j.value("num_binary", defaults.num_binary);
    c.num_continuous = j.value("num_continuous", defaults.num_continuous);
    c.num_informative = j.value("num_informative", defaults.num_informative);
    c.reward_effect_scale = j.value("reward_effect_scale", defaults.reward_effect_scale);
    c.reward_intercept_scale = j.value("reward_intercept_scale", defaults.reward_intercept_scale);
    c.behavior_strength = j.value("behavior_strength", defaults.behavior_strength);
    c.noise_level = j.value("noise_level", defaults.noise_level);
    c.misspecified = j.value("misspecified", defaults.misspecified);
    c.seed = j.value("seed", defaults.seed);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid synthetic config: ") + e.what());
  }
  for (const auto& [key, value] : j.items()) {
    if (!nlohmann::json(c).contains(key)) throw DataError("unknown synthetic config key '" + key + "'");
  }
}

GroundTruth::GroundTruth(FeatureSchema schema, std::vector<double> binary_rates,
                         Eigen::MatrixXd behavior_coefficients, Eigen::VectorXd behavior_intercepts,
                         Eigen::MatrixXd reward_coefficients, Eigen::VectorXd reward_intercepts,
                         Eigen::MatrixXd reward_quadratic, double noise_level,
                         std::vector<std::size_t> informative)
    : schema_(std::move(schema)),
      binary_rates_(std::move(binary_rates)),
      behavior_coefficients_(std::move(behavior_coefficients)),
      behavior_intercepts_(std::move(behavior_intercepts)),
      reward_coefficients_(std::move(reward_coefficients)),
      reward_intercepts_(std::move(reward_intercepts)),
      reward_quadratic_(std::move(reward_quadratic)),
      noise_level_(noise_level),
      informative_(std::move(informative)) {
  const auto k = static_cast<Eigen::Index>(schema_.num_arms());
  const auto f = static_cast<Eigen::Index>(schema_.num_features());
  auto check = [&](const Eigen::MatrixXd& m) {
    if (m.rows() != k || m.cols() != f) throw DataError("ground-truth matrix has wrong shape");
  };
  check(behavior_coefficients_);
  check(reward_coefficients_);
  check(reward_quadratic_);
  if (behavior_intercepts_.size() != k || reward_intercepts_.size() != k ||
      binary_rates_.size() != schema_.num_features()) {
    throw DataError("ground-truth vectors have wrong length");
  }
}

void GroundTruth::sample_context(SplitMix& rng, std::span<double> out) const {
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double u = rng.uniform();
    out[j] = schema_.kinds()[j] == FeatureKind::kBinary ? (u < binary_rates_[j] ? 1.0 : 0.0) : u;
  }
}

void GroundTruth::behavior_logits(std::span<const double> context, std::span<double> out) const {
  const Eigen::Map<const Eigen::VectorXd> x(context.data(),
                                            static_cast<Eigen::Index>(context.size()));
  const Eigen::VectorXd z = behavior_coefficients_ * x + behavior_intercepts_;
  std::copy(z.data(), z.data() + z.size(), out.begin());
}

void GroundTruth::behavior_probabilities(std::span<const double> context,
                                         std::span<double> out) const {
  behavior_logits(context, out);
  softmax_inplace(out);
}

double GroundTruth::expected_reward(std::span<const double> context, std::size_t arm) const {
  const auto a = static_cast<Eigen::Index>(arm);
  double z = reward_intercepts_[a];
  for (std::size_t j = 0; j < context.size(); ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    const double centered = context[j] - 0.5;
    z += reward_coefficients_(a, c) * context[j] + reward_quadratic_(a, c) * centered * centered;
  }
  return noise_level_ + (1.0 - 2.0 * noise_level_) * logistic(z);
}

Eigen::MatrixXd GroundTruth::propensity_matrix(const Dataset& data) const {
  const auto k = static_cast<Eigen::Index>(num_arms());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(data.size()), k);
  std::vector<double> row(num_arms());
  for (std::size_t i = 0; i < data.size(); ++i) {
    behavior_probabilities(data[i].context, row);
    for (Eigen::Index a = 0; a < k; ++a) out(static_cast<Eigen::Index>(i), a) = row[static_cast<std::size_t>(a)];
  }
  return out;
}

Eigen::MatrixXd GroundTruth::reward_matrix(const Dataset& data) const {
  const auto k = static_cast<Eigen::Index>(num_arms());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(data.size()), k);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (Eigen::Index a = 0; a < k; ++a) {
      out(static_cast<Eigen::Index>(i), a) = expected_reward(data[i].context, static_cast<std::size_t>(a));
    }
  }
  return out;
}

Eigen::MatrixXd GroundTruth::perturbed_propensity_matrix(const Dataset& data, double noise_std,
                                                         std::uint64_t seed) const {
  SplitMix rng(seed);
  const auto k = static_cast<Eigen::Index>(num_arms());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(data.size()), k);
  std::vector<double> row(num_arms());
  for (std::size_t i = 0; i < data.size(); ++i) {
    behavior_logits(data[i].context, row);
    for (double& z : row) z += noise_std * rng.normal();
    softmax_inplace(row);
    for (Eigen::Index a = 0; a < k; ++a) out(static_cast<Eigen::Index>(i), a) = row[static_cast<std::size_t>(a)];
  }
  return out;
}

nlohmann::json GroundTruth::to_json() const {
  return {{"schema", schema_},
          {"binary_rates", binary_rates_},
          {"behavior_coefficients", matrix_to_json(behavior_coefficients_)},
          {"behavior_intercepts", vector_of(behavior_intercepts_)},
          {"reward_coefficients", matrix_to_json(reward_coefficients_)},
          {"reward_intercepts", vector_of(reward_intercepts_)},
          {"reward_quadratic", matrix_to_json(reward_quadratic_)},
          {"noise_level", noise_level_},
          {"informative_features", informative_}};
}

GroundTruth GroundTruth::from_json(const nlohmann::json& j) {
  try {
    return GroundTruth(j.at("schema").get<FeatureSchema>(),
                       j.at("binary_rates").get<std::vector<double>>(),
                       matrix_from_json(j.at("behavior_coefficients")),
                       eigen_of(j.at("behavior_intercepts").get<std::vector<double>>()),
                       matrix_from_json(j.at("reward_coefficients")),
                       eigen_of(j.at("reward_intercepts").get<std::vector<double>>()),
                       matrix_from_json(j.at("reward_quadratic")),
                       j.at("noise_level").get<double>(),
                       j.at("informative_features").get<std::vector<std::size_t>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid ground-truth JSON: ") + e.what());
  }
}

GroundTruth make_ground_truth(const SynthConfig& config) {
  config.validate();
  const std::size_t f = config.num_binary + config.num_continuous;
  const std::size_t k = config.num_arms;
  std::vector<std::string> names;
  std::vector<FeatureKind> kinds;
  for (std::size_t j = 0; j < config.num_binary; ++j) {
    names.push_back("bin" + std::to_string(j));
    kinds.push_back(FeatureKind::kBinary);
  }
  for (std::size_t j = 0; j < config.num_continuous; ++j) {
    names.push_back("cont" + std::to_string(j));
    kinds.push_back(FeatureKind::kContinuous);
  }
  std::vector<std::string> arms;
  for (std::size_t a = 0; a < k; ++a) arms.push_back("arm" + std::to_string(a));

  SplitMix rng(config.seed ^ 0xA5A5A5A5DEADBEEFULL);
  std::vector<double> rates(f, 0.0);
  for (std::size_t j = 0; j < config.num_binary; ++j) rates[j] = 0.2 + 0.6 * rng.uniform();

  // Partial Fisher-Yates to pick the informative features.
  std::vector<std::size_t> order(f);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t j = 0; j < config.num_informative; ++j) {
    const std::size_t pick = j + static_cast<std::size_t>(rng.next() % (f - j));
    std::swap(order[j], order[pick]);
  }
  std::vector<std::size_t> informative(order.begin(),
                                       order.begin() + static_cast<std::ptrdiff_t>(config.num_informative));
  std::sort(informative.begin(), informative.end());

  const auto ki = static_cast<Eigen::Index>(k);
  const auto fi = static_cast<Eigen::Index>(f);
  Eigen::MatrixXd behavior(ki, fi);
  Eigen::VectorXd behavior_b(ki);
  Eigen::MatrixXd reward = Eigen::MatrixXd::Zero(ki, fi);
  Eigen::VectorXd reward_b(ki);
  Eigen::MatrixXd quadratic = Eigen::MatrixXd::Zero(ki, fi);
  for (Eigen::Index a = 0; a < ki; ++a) {
    behavior_b[a] = 0.5 * config.behavior_strength * rng.normal();
    for (Eigen::Index c = 0; c < fi; ++c) behavior(a, c) = config.behavior_strength * rng.normal();
    reward_b[a] = config.reward_intercept_scale * rng.normal();
    for (const std::size_t j : informative) {
      const auto c = static_cast<Eigen::Index>(j);
      reward(a, c) = config.reward_effect_scale * rng.normal();
      if (config.misspecified) quadratic(a, c) = 4.0 * config.reward_effect_scale * rng.normal();
    }
    // Center the linear effects so the intercept sets the arm's typical reward level.
    for (const std::size_t j : informative) {
      const auto c = static_cast<Eigen::Index>(j);
      const double mean_x = config.misspecified || kinds[j] == FeatureKind::kContinuous ? 0.5 : rates[j];
      reward_b[a] -= reward(a, c) * mean_x;
    }
  }
  return GroundTruth(FeatureSchema(std::move(names), std::move(kinds), std::move(arms)),
                     std::move(rates), std::move(behavior), std::move(behavior_b),
                     std::move(reward), std::move(reward_b), std::move(quadratic),
                     config.noise_level, std::move(informative));
}

Dataset sample_dataset(const GroundTruth& truth, std::size_t num_samples, std::uint64_t seed) {
  if (num_samples < 1) throw DataError("synthetic dataset needs T >= 1");
  SplitMix rng(seed);
  std::vector<LoggedSample> samples(num_samples);
  std::vector<double> probs(truth.num_arms());
  std::size_t successes = 0;
  for (auto& s : samples) {
    s.context.resize(truth.num_features());
    truth.sample_context(rng, s.context);
    truth.behavior_probabilities(s.context, probs);
    s.action = rng.categorical(probs);
    s.reward = rng.uniform() < truth.expected_reward(s.context, s.action) ? 1 : 0;
    s.effectiveness_raw = 10.0 * s.reward;
    s.user_id = "synth";
    successes += static_cast<std::size_t>(s.reward);
  }
  PreprocessStats stats;
  stats.grand_mean = 10.0 * static_cast<double>(successes) / static_cast<double>(num_samples);
  return Dataset(truth.schema(), std::move(samples), std::move(stats));
}

SynthResult generate(const SynthConfig& config) {
  GroundTruth truth = make_ground_truth(config);
  Dataset data = sample_dataset(truth, config.num_samples, config.seed);
  return {std::move(data), std::move(truth)};
}

TrueValue true_value(const Policy& policy, const GroundTruth& truth, std::size_t n_mc,
                     std::uint64_t seed) {
  if (n_mc < 1) throw std::invalid_argument("true_value needs n_mc >= 1");
  if (policy.num_arms() != truth.num_arms()) throw DataError("policy arm count mismatch");
  SplitMix rng(seed);
  const std::size_t k = truth.num_arms();
  std::vector<double> x(truth.num_features());
  std::vector<double> behavior(k);
  std::vector<double> target(k);
  // Welford running mean and squared deviations.
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t n = 0; n < n_mc; ++n) {
    truth.sample_context(rng, x);
    truth.behavior_probabilities(x, behavior);
    const std::size_t logged = rng.categorical(behavior);
    policy.probabilities(x, logged, target);
    double v = 0.0;
    for (std::size_t a = 0; a < k; ++a) {
      if (target[a] != 0.0) v += target[a] * truth.expected_reward(x, a);
    }
    const double delta = v - mean;
    mean += delta / static_cast<double>(n + 1);
    m2 += delta * (v - mean);
  }
  const double n = static_cast<double>(n_mc);
  TrueValue out;
  out.value = mean;
  if (n_mc > 1) out.std_error = std::sqrt(m2 / (n - 1.0) / n);
  return out;
}

std::size_t OraclePolicy::decide(std::span<const double> context) const {
  std::size_t best = 0;
  double best_value = truth_->expected_reward(context, 0);
  for (std::size_t a = 1; a < truth_->num_arms(); ++a) {
    const double v = truth_->expected_reward(context, a);
    if (v > best_value) {
      best_value = v;
      best = a;
    }
  }
  return best;
}

void TrueBehaviorPolicy::probabilities(std::span<const double> context, std::size_t,
                                       std::span<double> out) const {
  truth_->behavior_probabilities(context, out);
}

}  // namespace cbandit
