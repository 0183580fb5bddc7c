#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cbandit/dataset.hpp"
#include "cbandit/policy.hpp"
#include "cbandit/propensity.hpp"

namespace cbandit {

/// Learners (DR, DM, IPW, OT) and baselines (Observed, Random, Behavior). Behavior replays
/// the fitted propensity model as a stochastic policy.
enum class Algorithm { kDR, kDM, kIPW, kOffsetTree, kObserved, kRandom, kBehavior };

std::string_view to_string(Algorithm algorithm);
Algorithm parse_algorithm(std::string_view name);
bool is_baseline(Algorithm algorithm);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  bool significant = false;
};

/// Two-sided Welch t-test of mean(a) against mean(b).
WelchResult t_test_independent(std::span<const double> a, std::span<const double> b,
                               double alpha = 0.05);

void to_json(nlohmann::json& j, const WelchResult& result);

struct ExperimentConfig {
  std::vector<Algorithm> algorithms = {Algorithm::kDR, Algorithm::kDM, Algorithm::kOffsetTree,
                                       Algorithm::kObserved, Algorithm::kRandom};
  std::vector<double> taus = {0.0, 0.02, 0.05};
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  PropensityKind propensity = PropensityKind::kBoostedTrees;
  BoostingConfig boosting;
  double propensity_ridge = 1.0;  // multinomial logit only
  double reward_lambda = 1.0;
  double policy_lambda = 1.0;
  double alpha = 0.05;
  // Refit [0, 1] scaling on each training fold and apply it to the matching test fold.
  bool rescale_per_fold = true;

  void validate(std::size_t num_arms) const;
};

struct ExperimentCell {
  Algorithm algorithm = Algorithm::kDR;
  double tau = 0.0;
  std::vector<double> fold_means;
  double mean = 0.0;
  double std = 0.0;  // sample std over folds
  std::optional<WelchResult> vs_random;
  std::optional<WelchResult> vs_observed;
  std::optional<WelchResult> vs_behavior;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::size_t num_samples = 0;
  std::vector<std::size_t> fold_test_sizes;
  std::vector<ExperimentCell> cells;  // algorithm-major, then tau

  const ExperimentCell& cell(Algorithm algorithm, double tau) const;
};

/// k-fold benchmark. Per fold: fit propensity and reward models on the training part, learn
/// each policy there at every tau, and score it on the held-out part with value_tipw at the
/// same tau. Baselines are scored on the same folds.
ExperimentResult run_experiment(const Dataset& data, const ExperimentConfig& config);

void to_json(nlohmann::json& j, const ExperimentConfig& config);
void from_json(const nlohmann::json& j, ExperimentConfig& config);
void to_json(nlohmann::json& j, const ExperimentResult& result);

/// Markdown table: one row per algorithm, one column per tau, "mean ± std" with † when
/// significantly better than Random, * than Observed and ‡ than Behavior.
std::string render_markdown(const ExperimentResult& result);

struct FeatureImportance {
  std::string name;
  double importance = 0.0;
};

using FeatureRanking = std::vector<FeatureImportance>;

/// importance(f) = sum over arms of |coef(a, f)|, descending; ties keep schema order.
FeatureRanking rank_features(const LinearPolicy& policy);

std::string ranking_csv(const FeatureRanking& ranking);
nlohmann::json ranking_json(const FeatureRanking& ranking);
std::string ranking_svg(const FeatureRanking& ranking);

}  // namespace cbandit
