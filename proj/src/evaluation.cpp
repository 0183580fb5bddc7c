#include "cbandit/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "cbandit/csv_io.hpp"
#include "cbandit/error.hpp"
#include "cbandit/estimators.hpp"
#include "cbandit/learners.hpp"
#include "cbandit/preprocess.hpp"
#include "cbandit/reward_model.hpp"

namespace cbandit {
namespace {

constexpr std::array<std::pair<Algorithm, std::string_view>, 7> kAlgorithmNames = {{
    {Algorithm::kDR, "DR"},
    {Algorithm::kDM, "DM"},
    {Algorithm::kIPW, "IPW"},
    {Algorithm::kOffsetTree, "OT"},
    {Algorithm::kObserved, "Observed"},
    {Algorithm::kRandom, "Random"},
    {Algorithm::kBehavior, "Behavior"},
}};

double sample_mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (const double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

ImputationMethod imputation_for(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kDM:
      return ImputationMethod::kDM;
    case Algorithm::kIPW:
      return ImputationMethod::kIPW;
    default:
      return ImputationMethod::kDR;
  }
}

std::string_view aggregation_name(BalanceAggregation a) {
  return a == BalanceAggregation::kMax ? "max" : "mean";
}

std::string fixed(double value, int digits) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(digits);
  out << value;
  return out.str();
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(Algorithm algorithm) {
  for (const auto& [a, name] : kAlgorithmNames) {
    if (a == algorithm) return name;
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view name) {
  for (const auto& [a, n] : kAlgorithmNames) {
    if (n == name) return a;
  }
  throw std::invalid_argument("unknown algorithm '" + std::string(name) +
                              "' (expected DR, DM, IPW, OT, Observed, Random or Behavior)");
}

bool is_baseline(Algorithm algorithm) {
  return algorithm == Algorithm::kObserved || algorithm == Algorithm::kRandom ||
         algorithm == Algorithm::kBehavior;
}

WelchResult t_test_independent(std::span<const double> a, std::span<const double> b,
                               double alpha) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("t-test needs two values per group");
  const double ma = sample_mean(a);
  const double mb = sample_mean(b);
  const double va = sample_variance(a, ma) / static_cast<double>(a.size());
  const double vb = sample_variance(b, mb) / static_cast<double>(b.size());
  WelchResult out;
  const double se2 = va + vb;
  if (se2 == 0.0) {
    if (ma == mb) return out;
    out.t = ma > mb ? std::numeric_limits<double>::infinity()
                    : -std::numeric_limits<double>::infinity();
    out.df = static_cast<double>(a.size() + b.size() - 2);
    out.p = 0.0;
    out.significant = out.p < alpha;
    return out;
  }
  out.t = (ma - mb) / std::sqrt(se2);
  const double da = va * va / static_cast<double>(a.size() - 1);
  const double db = vb * vb / static_cast<double>(b.size() - 1);
  out.df = se2 * se2 / (da + db);
  const boost::math::students_t dist(out.df);
  out.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t))));
  out.significant = out.p < alpha;
  return out;
}

void to_json(nlohmann::json& j, const WelchResult& r) {
  j = {{"t", r.t}, {"df", r.df}, {"p", r.p}, {"significant", r.significant}};
}

void ExperimentConfig::validate(std::size_t num_arms) const {
  if (algorithms.empty()) throw std::invalid_argument("experiment needs at least one algorithm");
  if (taus.empty()) throw std::invalid_argument("experiment needs at least one tau");
  if (folds < 2) throw std::invalid_argument("experiment needs k >= 2 folds");
  for (const double tau : taus) check_tau(tau, num_arms);
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0, 1)");
  if (!(reward_lambda >= 0.0) || !(policy_lambda >= 0.0) || !(propensity_ridge >= 0.0)) {
    throw std::invalid_argument("regularization strengths must be non-negative");
  }
  if (propensity == PropensityKind::kBoostedTrees) boosting.validate();
}

const ExperimentCell& ExperimentResult::cell(Algorithm algorithm, double tau) const {
  for (const auto& c : cells) {
    if (c.algorithm == algorithm && c.tau == tau) return c;
  }
  throw std::out_of_range("no experiment cell for " + std::string(to_string(algorithm)));
}

ExperimentResult run_experiment(const Dataset& data, const ExperimentConfig& config) {
  const std::size_t k = data.num_arms();
  config.validate(k);
  const auto folds = kfold_split(data, config.folds, config.seed);
  const std::size_t n_tau = config.taus.size();
  const std::size_t n_alg = config.algorithms.size();

  ExperimentResult result;
  result.config = config;
  result.num_samples = data.size();
  // scores[alg][tau][fold]
  std::vector<std::vector<std::vector<double>>> scores(
      n_alg, std::vector<std::vector<double>>(n_tau, std::vector<double>(folds.size(), 0.0)));

  for (std::size_t f = 0; f < folds.size(); ++f) {
    Dataset train = data.subset(folds[f].train);
    Dataset test = data.subset(folds[f].test);
    if (config.rescale_per_fold) {
      const auto ranges = fit_scaling(train);
      train = apply_scaling(train, ranges);
      test = apply_scaling(test, ranges);
    }
    result.fold_test_sizes.push_back(test.size());
    const std::string where = "fold " + std::to_string(f + 1) + "/" + std::to_string(folds.size());

    try {
      auto pm = std::make_shared<const PropensityModel>(
          config.propensity == PropensityKind::kBoostedTrees
              ? fit_gbm_propensity(train, config.boosting).model
              : fit_multinomial_logit(train, config.propensity_ridge));
      const bool needs_rm = std::any_of(
          config.algorithms.begin(), config.algorithms.end(),
          [](Algorithm a) { return a == Algorithm::kDM || a == Algorithm::kDR; });
      const RewardModel rm =
          needs_rm ? fit_reward_models(train, config.reward_lambda) : RewardModel::zero(train.schema());

      const Eigen::MatrixXd train_x = train.context_matrix();
      const Eigen::MatrixXd train_props = pm->predict_matrix(train_x);
      const Eigen::MatrixXd train_rhat = rm.predict_matrix(train_x);
      const auto train_actions = train.actions();
      const Eigen::VectorXd train_rewards = train.rewards();

      const Eigen::MatrixXd test_props = pm->predict_matrix(test);
      const auto test_actions = test.actions();
      const Eigen::VectorXd test_rewards = test.rewards();
      const LoggedBandit log{test_actions, test_rewards};

      std::optional<Eigen::MatrixXd> dm_probs;  // DM learning does not depend on tau
      for (std::size_t ai = 0; ai < n_alg; ++ai) {
        const Algorithm alg = config.algorithms[ai];
        for (std::size_t ti = 0; ti < n_tau; ++ti) {
          const double tau = config.taus[ti];
          Eigen::MatrixXd probs;
          switch (alg) {
            case Algorithm::kObserved:
            case Algorithm::kRandom:
              probs = policy_matrix(
                  make_baseline(alg == Algorithm::kRandom ? BaselineKind::kRandom
                                                          : BaselineKind::kObserved,
                                k),
                  test);
              break;
            case Algorithm::kBehavior:
              probs = test_props;
              break;
            case Algorithm::kOffsetTree:
              probs = policy_matrix(
                  fit_offset_tree(train, train_props, tau, config.policy_lambda), test);
              break;
            case Algorithm::kDM:
              if (!dm_probs) {
                const auto imputed = impute_rewards(train_actions, train_rewards,
                                                    ImputationMethod::kDM, &train_rhat, nullptr, 0.0);
                dm_probs = policy_matrix(
                    fit_policy(imputed, train_x, train.schema(), config.policy_lambda), test);
              }
              probs = *dm_probs;
              break;
            case Algorithm::kIPW:
            case Algorithm::kDR: {
              const auto imputed = impute_rewards(train_actions, train_rewards, imputation_for(alg),
                                                  &train_rhat, &train_props, tau);
              probs = policy_matrix(
                  fit_policy(imputed, train_x, train.schema(), config.policy_lambda), test);
              break;
            }
          }
          scores[ai][ti][f] = value_tipw(probs, log, test_props, tau).mean;
        }
      }
    } catch (const FitError& e) {
      throw FitError(where + ": " + e.what());
    }
  }

  auto find_scores = [&](Algorithm a, std::size_t ti) -> const std::vector<double>* {
    for (std::size_t ai = 0; ai < n_alg; ++ai) {
      if (config.algorithms[ai] == a) return &scores[ai][ti];
    }
    return nullptr;
  };

  for (std::size_t ai = 0; ai < n_alg; ++ai) {
    for (std::size_t ti = 0; ti < n_tau; ++ti) {
      ExperimentCell cell;
      cell.algorithm = config.algorithms[ai];
      cell.tau = config.taus[ti];
      cell.fold_means = scores[ai][ti];
      cell.mean = sample_mean(cell.fold_means);
      cell.std = std::sqrt(sample_variance(cell.fold_means, cell.mean));
      auto compare = [&](Algorithm other, std::optional<WelchResult>& slot) {
        if (cell.algorithm == other) return;
        if (const auto* s = find_scores(other, ti)) {
          slot = t_test_independent(cell.fold_means, *s, config.alpha);
        }
      };
      compare(Algorithm::kRandom, cell.vs_random);
      compare(Algorithm::kObserved, cell.vs_observed);
      compare(Algorithm::kBehavior, cell.vs_behavior);
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  std::vector<std::string> algorithms;
  for (const auto a : c.algorithms) algorithms.emplace_back(to_string(a));
  j = {{"algorithms", algorithms},
       {"taus", c.taus},
       {"folds", c.folds},
       {"seed", c.seed},
       {"propensity", c.propensity == PropensityKind::kBoostedTrees ? "gbm" : "logit"},
       {"boosting",
        {{"max_iterations", c.boosting.max_iterations},
         {"tree_depth", c.boosting.tree_depth},
         {"shrinkage", c.boosting.shrinkage},
         {"min_samples_leaf", c.boosting.min_samples_leaf},
         {"checkpoint_interval", c.boosting.checkpoint_interval},
         {"max_bins", c.boosting.max_bins},
         {"aggregation", aggregation_name(c.boosting.aggregation)}}},
       {"propensity_ridge", c.propensity_ridge},
       {"reward_lambda", c.reward_lambda},
       {"policy_lambda", c.policy_lambda},
       {"alpha", c.alpha},
       {"rescale_per_fold", c.rescale_per_fold}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  const ExperimentConfig d;
  if (!j.is_object()) throw std::invalid_argument("experiment config must be a JSON object");
  const nlohmann::json known = d;
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("unknown experiment key '" + key + "'");
  }
  try {
    if (j.contains("algorithms")) {
      c.algorithms.clear();
      for (const auto& name : j.at("algorithms")) {
        c.algorithms.push_back(parse_algorithm(name.get<std::string>()));
      }
    }
    c.taus = j.value("taus", d.taus);
    c.folds = j.value("folds", d.folds);
    c.seed = j.value("seed", d.seed);
    const std::string kind = j.value("propensity", std::string("gbm"));
    if (kind == "gbm") {
      c.propensity = PropensityKind::kBoostedTrees;
    } else if (kind == "logit") {
      c.propensity = PropensityKind::kMultinomialLogit;
    } else {
      throw std::invalid_argument("propensity must be 'gbm' or 'logit', got '" + kind + "'");
    }
    if (j.contains("boosting")) {
      const auto& b = j.at("boosting");
      const nlohmann::json known_b = known.at("boosting");
      for (const auto& [key, value] : b.items()) {
        if (!known_b.contains(key)) throw std::invalid_argument("unknown boosting key '" + key + "'");
      }
      c.boosting.max_iterations = b.value("max_iterations", d.boosting.max_iterations);
      c.boosting.tree_depth = b.value("tree_depth", d.boosting.tree_depth);
      c.boosting.shrinkage = b.value("shrinkage", d.boosting.shrinkage);
      c.boosting.min_samples_leaf = b.value("min_samples_leaf", d.boosting.min_samples_leaf);
      c.boosting.checkpoint_interval = b.value("checkpoint_interval", d.boosting.checkpoint_interval);
      c.boosting.max_bins = b.value("max_bins", d.boosting.max_bins);
      const std::string agg = b.value("aggregation", std::string("mean"));
      if (agg != "mean" && agg != "max") {
        throw std::invalid_argument("aggregation must be 'mean' or 'max'");
      }
      c.boosting.aggregation = agg == "max" ? BalanceAggregation::kMax : BalanceAggregation::kMean;
    }
    c.propensity_ridge = j.value("propensity_ridge", d.propensity_ridge);
    c.reward_lambda = j.value("reward_lambda", d.reward_lambda);
    c.policy_lambda = j.value("policy_lambda", d.policy_lambda);
    c.alpha = j.value("alpha", d.alpha);
    c.rescale_per_fold = j.value("rescale_per_fold", d.rescale_per_fold);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("invalid experiment config: ") + e.what());
  }
}

void to_json(nlohmann::json& j, const ExperimentResult& r) {
  auto cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    nlohmann::json cell = {{"algorithm", to_string(c.algorithm)},
                           {"tau", c.tau},
                           {"fold_means", c.fold_means},
                           {"mean", c.mean},
                           {"std", c.std}};
    if (c.vs_random) cell["vs_random"] = *c.vs_random;
    if (c.vs_observed) cell["vs_observed"] = *c.vs_observed;
    if (c.vs_behavior) cell["vs_behavior"] = *c.vs_behavior;
    cells.push_back(std::move(cell));
  }
  j = {{"config", r.config},
       {"num_samples", r.num_samples},
       {"fold_test_sizes", r.fold_test_sizes},
       {"cells", cells}};
}

std::string render_markdown(const ExperimentResult& r) {
  std::ostringstream out;
  out << "| Algorithm |";
  for (const double tau : r.config.taus) out << " IPW(τ = " << format_double(tau) << ") |";
  out << "\n|---|";
  for (std::size_t i = 0; i < r.config.taus.size(); ++i) out << "---|";
  out << "\n";
  for (const auto alg : r.config.algorithms) {
    out << "| " << to_string(alg) << " |";
    for (const double tau : r.config.taus) {
      const auto& c = r.cell(alg, tau);
      std::string marks;
      if (c.vs_random && c.vs_random->significant && c.vs_random->t > 0) marks += "†";
      if (c.vs_observed && c.vs_observed->significant && c.vs_observed->t > 0) marks += "*";
      if (c.vs_behavior && c.vs_behavior->significant && c.vs_behavior->t > 0) marks += "‡";
      out << " " << fixed(c.mean, 4) << " ± " << fixed(c.std, 4);
      if (!marks.empty()) out << " " << marks;
      out << " |";
    }
    out << "\n";
  }
  out << "\nMean reward by policy over " << r.config.folds
      << " folds (mean ± std). † / * / ‡: significantly above Random / Observed / Behavior"
      << " (Welch t-test, α = " << format_double(r.config.alpha) << ").\n";
  return out.str();
}

FeatureRanking rank_features(const LinearPolicy& policy) {
  const auto& names = policy.schema().names();
  FeatureRanking ranking;
  ranking.reserve(names.size());
  for (std::size_t f = 0; f < names.size(); ++f) {
    ranking.push_back({names[f], policy.coefficients().col(static_cast<Eigen::Index>(f)).cwiseAbs().sum()});
  }
  std::stable_sort(ranking.begin(), ranking.end(),
                   [](const auto& a, const auto& b) { return a.importance > b.importance; });
  return ranking;
}

std::string ranking_csv(const FeatureRanking& ranking) {
  std::string out = "rank,feature,importance\n";
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    out += std::to_string(i + 1) + "," + ranking[i].name + "," + format_double(ranking[i].importance) + "\n";
  }
  return out;
}

nlohmann::json ranking_json(const FeatureRanking& ranking) {
  auto out = nlohmann::json::array();
  for (const auto& r : ranking) out.push_back({{"feature", r.name}, {"importance", r.importance}});
  return out;
}

std::string ranking_svg(const FeatureRanking& ranking) {
  constexpr int kRow = 18;
  constexpr int kLabel = 220;
  constexpr int kBar = 400;
  constexpr int kTop = 30;
  const int height = kTop + kRow * static_cast<int>(ranking.size()) + 10;
  const double top = ranking.empty() ? 0.0 : ranking.front().importance;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kLabel + kBar + 90
      << "\" height=\"" << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<text x=\"10\" y=\"18\" font-weight=\"bold\">Feature importance (sum of |coefficient| over arms)</text>\n";
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    const int y = kTop + kRow * static_cast<int>(i);
    const double width = top > 0.0 ? kBar * ranking[i].importance / top : 0.0;
    out << "<text x=\"" << kLabel - 6 << "\" y=\"" << y + 12 << "\" text-anchor=\"end\">"
        << xml_escape(ranking[i].name) << "</text>";
    out << "<rect x=\"" << kLabel << "\" y=\"" << y + 2 << "\" width=\"" << fixed(width, 2)
        << "\" height=\"" << kRow - 4 << "\" fill=\"#4c72b0\"/>";
    out << "<text x=\"" << kLabel + static_cast<int>(width) + 4 << "\" y=\"" << y + 12 << "\">"
        << fixed(ranking[i].importance, 3) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace cbandit
