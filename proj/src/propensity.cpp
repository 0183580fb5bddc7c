#include "cbandit/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "cbandit/error.hpp"
#include "cbandit/logistic.hpp"

namespace cbandit {
namespace {

constexpr int kModelVersion = 1;

std::vector<double> population_sd(const Eigen::MatrixXd& x) {
  std::vector<double> sd(static_cast<std::size_t>(x.cols()));
  const double n = static_cast<double>(x.rows());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    sd[static_cast<std::size_t>(j)] = std::sqrt((x.col(j).array() - mean).square().sum() / n);
  }
  return sd;
}

// Fills report.asmd / mean / max for the given weights.
void compute_asmd(const Eigen::MatrixXd& x, std::span<const std::size_t> actions,
                  std::span<const double> weights, const std::vector<double>& sd,
                  std::size_t num_arms, BalanceReport& report) {
  const auto f = static_cast<std::size_t>(x.cols());
  std::vector<double> arm_weight(num_arms, 0.0);
  std::vector<double> arm_sum(num_arms * f, 0.0);
  std::vector<double> total_sum(f, 0.0);
  double total_weight = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const std::size_t a = actions[static_cast<std::size_t>(i)];
    const double w = weights[static_cast<std::size_t>(i)];
    arm_weight[a] += w;
    total_weight += w;
    double* row_sum = &arm_sum[a * f];
    for (std::size_t j = 0; j < f; ++j) {
      const double v = w * x(i, static_cast<Eigen::Index>(j));
      row_sum[j] += v;
      total_sum[j] += v;
    }
  }
  report.asmd.assign(f, std::vector<double>(num_arms, 0.0));
  double sum = 0.0;
  double top = 0.0;
  for (std::size_t j = 0; j < f; ++j) {
    for (std::size_t a = 0; a < num_arms; ++a) {
      const double w_in = arm_weight[a];
      const double w_out = total_weight - w_in;
      double value = 0.0;
      if (sd[j] > 0.0 && w_in > 0.0 && w_out > 0.0) {
        const double mean_in = arm_sum[a * f + j] / w_in;
        const double mean_out = (total_sum[j] - arm_sum[a * f + j]) / w_out;
        value = std::abs(mean_in - mean_out) / sd[j];
      }
      report.asmd[j][a] = value;
      sum += value;
      top = std::max(top, value);
    }
  }
  report.mean = sum / static_cast<double>(f * num_arms);
  report.max = top;
}

void check_context(std::span<const double> context, std::size_t expected) {
  if (context.size() != expected) {
    throw DataError("context has " + std::to_string(context.size()) + " features, model expects " +
                    std::to_string(expected));
  }
}

// Per-feature quantile bins; a value falls in the first bin whose edge is >= the value.
struct FeatureBins {
  std::vector<double> edges;
  std::vector<std::uint8_t> codes;  // one per sample
};

FeatureBins make_bins(const Eigen::VectorXd& column, std::size_t max_bins) {
  std::vector<double> sorted(column.data(), column.data() + column.size());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> uniques = sorted;
  uniques.erase(std::unique(uniques.begin(), uniques.end()), uniques.end());

  FeatureBins bins;
  if (uniques.size() <= max_bins) {
    for (std::size_t u = 0; u + 1 < uniques.size(); ++u) {
      bins.edges.push_back(0.5 * (uniques[u] + uniques[u + 1]));
    }
  } else {
    for (std::size_t q = 1; q < max_bins; ++q) {
      const double cut = sorted[q * sorted.size() / max_bins];
      // Midpoint to the next distinct value keeps the edge strictly between observations.
      const auto next = std::upper_bound(uniques.begin(), uniques.end(), cut);
      if (next == uniques.end()) break;
      const double edge = 0.5 * (cut + *next);
      if (bins.edges.empty() || edge > bins.edges.back()) bins.edges.push_back(edge);
    }
  }
  bins.codes.resize(static_cast<std::size_t>(column.size()));
  for (Eigen::Index i = 0; i < column.size(); ++i) {
    const auto it = std::lower_bound(bins.edges.begin(), bins.edges.end(), column[i]);
    bins.codes[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(it - bins.edges.begin());
  }
  return bins;
}

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<FeatureBins>& bins, const BoostingConfig& config,
              std::size_t num_arms)
      : bins_(bins), config_(config), leaf_scale_(static_cast<double>(num_arms - 1) / num_arms) {}

  // Fits one tree to the residuals; writes each sample's leaf value into `leaf_values`.
  RegressionTree build(const std::vector<double>& residual, const std::vector<double>& curvature,
                       std::vector<double>& leaf_values) {
    residual_ = &residual;
    curvature_ = &curvature;
    leaf_values_ = &leaf_values;
    RegressionTree tree;
    std::vector<std::uint32_t> all(residual.size());
    std::iota(all.begin(), all.end(), 0u);
    grow(tree, all, 0);
    return tree;
  }

 private:
  int grow(RegressionTree& tree, std::vector<std::uint32_t>& idx, std::size_t depth) {
    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();

    double g_total = 0.0;
    for (const auto i : idx) g_total += (*residual_)[i];
    const double n_total = static_cast<double>(idx.size());

    int best_feature = -1;
    std::size_t best_bin = 0;
    double best_gain = 1e-12;
    if (depth < config_.tree_depth && idx.size() >= 2 * config_.min_samples_leaf) {
      for (std::size_t j = 0; j < bins_.size(); ++j) {
        const auto& fb = bins_[j];
        const std::size_t nb = fb.edges.size() + 1;
        if (nb < 2) continue;
        hist_g_.assign(nb, 0.0);
        hist_n_.assign(nb, 0);
        for (const auto i : idx) {
          const auto b = fb.codes[i];
          hist_g_[b] += (*residual_)[i];
          ++hist_n_[b];
        }
        double g_left = 0.0;
        std::size_t n_left = 0;
        for (std::size_t b = 0; b + 1 < nb; ++b) {
          g_left += hist_g_[b];
          n_left += hist_n_[b];
          const std::size_t n_right = idx.size() - n_left;
          if (n_left < config_.min_samples_leaf) continue;
          if (n_right < config_.min_samples_leaf) break;
          const double g_right = g_total - g_left;
          const double gain = g_left * g_left / static_cast<double>(n_left) +
                              g_right * g_right / static_cast<double>(n_right) -
                              g_total * g_total / n_total;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = static_cast<int>(j);
            best_bin = b;
          }
        }
      }
    }

    if (best_feature < 0) {
      double h_total = 0.0;
      for (const auto i : idx) h_total += (*curvature_)[i];
      const double value = h_total > 1e-12 ? leaf_scale_ * g_total / h_total : 0.0;
      tree.nodes[static_cast<std::size_t>(node_id)].value = value;
      for (const auto i : idx) (*leaf_values_)[i] = value;
      return node_id;
    }

    const auto& fb = bins_[static_cast<std::size_t>(best_feature)];
    std::vector<std::uint32_t> left;
    std::vector<std::uint32_t> right;
    for (const auto i : idx) (fb.codes[i] <= best_bin ? left : right).push_back(i);
    idx.clear();
    idx.shrink_to_fit();

    tree.nodes[static_cast<std::size_t>(node_id)].feature = best_feature;
    tree.nodes[static_cast<std::size_t>(node_id)].threshold = fb.edges[best_bin];
    const int l = grow(tree, left, depth + 1);
    const int r = grow(tree, right, depth + 1);
    tree.nodes[static_cast<std::size_t>(node_id)].left = l;
    tree.nodes[static_cast<std::size_t>(node_id)].right = r;
    return node_id;
  }

  const std::vector<FeatureBins>& bins_;
  const BoostingConfig& config_;
  double leaf_scale_;
  const std::vector<double>* residual_ = nullptr;
  const std::vector<double>* curvature_ = nullptr;
  std::vector<double>* leaf_values_ = nullptr;
  std::vector<double> hist_g_;
  std::vector<std::size_t> hist_n_;
};

nlohmann::json tree_to_json(const RegressionTree& tree, int node_id,
                            const std::vector<std::string>& names) {
  const auto& node = tree.nodes[static_cast<std::size_t>(node_id)];
  if (node.feature < 0) return {{"value", node.value}};
  return {{"feature", names[static_cast<std::size_t>(node.feature)]},
          {"threshold", node.threshold},
          {"left", tree_to_json(tree, node.left, names)},
          {"right", tree_to_json(tree, node.right, names)}};
}

int tree_from_json(const nlohmann::json& j, const FeatureSchema& schema, RegressionTree& tree) {
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (j.contains("value")) {
    tree.nodes[static_cast<std::size_t>(id)].value = j.at("value").get<double>();
    return id;
  }
  const auto feature = schema.feature_index(j.at("feature").get<std::string>());
  if (!feature) throw DataError("tree references unknown feature");
  const double threshold = j.at("threshold").get<double>();
  const int l = tree_from_json(j.at("left"), schema, tree);
  const int r = tree_from_json(j.at("right"), schema, tree);
  auto& node = tree.nodes[static_cast<std::size_t>(id)];
  node.feature = static_cast<int>(*feature);
  node.threshold = threshold;
  node.left = l;
  node.right = r;
  return id;
}

void require_all_arms(const Dataset& data) {
  const auto counts = data.arm_counts();
  for (std::size_t a = 0; a < counts.size(); ++a) {
    if (counts[a] == 0) {
      throw FitError("arm '" + data.schema().arm_names()[a] + "' has no logged samples");
    }
  }
}

}  // namespace

void BoostingConfig::validate() const {
  if (max_iterations < 1) throw std::invalid_argument("boosting needs max_iterations >= 1");
  if (!(shrinkage > 0.0 && shrinkage <= 1.0)) {
    throw std::invalid_argument("boosting shrinkage must lie in (0, 1]");
  }
  if (checkpoint_interval < 1) throw std::invalid_argument("checkpoint_interval must be >= 1");
  if (min_samples_leaf < 1) throw std::invalid_argument("min_samples_leaf must be >= 1");
  if (max_bins < 2 || max_bins > 255) throw std::invalid_argument("max_bins must lie in [2, 255]");
}

void to_json(nlohmann::json& j, const BalanceReport& report) {
  nlohmann::json by_feature = nlohmann::json::object();
  for (std::size_t f = 0; f < report.features.size(); ++f) {
    nlohmann::json by_arm = nlohmann::json::object();
    for (std::size_t a = 0; a < report.arms.size(); ++a) by_arm[report.arms[a]] = report.asmd[f][a];
    by_feature[report.features[f]] = std::move(by_arm);
  }
  auto curve = nlohmann::json::array();
  for (const auto& point : report.iteration_curve) {
    curve.push_back({{"iteration", point.iteration}, {"summary", point.summary}});
  }
  j = {{"asmd", std::move(by_feature)},
       {"mean", report.mean},
       {"max", report.max},
       {"iteration_curve", std::move(curve)}};
}

double RegressionTree::predict(std::span<const double> x) const {
  std::size_t id = 0;
  while (nodes[id].feature >= 0) {
    const auto& node = nodes[id];
    id = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold
                                      ? node.left
                                      : node.right);
  }
  return nodes[id].value;
}

std::size_t RegressionTree::depth() const {
  std::vector<std::size_t> level(nodes.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t id = 0; id < nodes.size(); ++id) {
    deepest = std::max(deepest, level[id]);
    if (nodes[id].feature >= 0) {
      level[static_cast<std::size_t>(nodes[id].left)] = level[id] + 1;
      level[static_cast<std::size_t>(nodes[id].right)] = level[id] + 1;
    }
  }
  return deepest;
}

PropensityModel PropensityModel::logit(FeatureSchema schema, Eigen::MatrixXd coefficients) {
  if (coefficients.rows() != static_cast<Eigen::Index>(schema.num_arms()) ||
      coefficients.cols() != static_cast<Eigen::Index>(schema.num_features()) + 1) {
    throw DataError("logit coefficient matrix does not match the schema");
  }
  PropensityModel model;
  model.kind_ = PropensityKind::kMultinomialLogit;
  model.schema_ = std::move(schema);
  model.logit_coefficients_ = std::move(coefficients);
  return model;
}

PropensityModel PropensityModel::boosted(FeatureSchema schema, std::vector<double> initial_scores,
                                         double shrinkage,
                                         std::vector<std::vector<RegressionTree>> trees) {
  if (initial_scores.size() != schema.num_arms()) {
    throw DataError("boosted model initial scores do not match the arm count");
  }
  for (const auto& round : trees) {
    if (round.size() != schema.num_arms()) throw DataError("boosting round has wrong tree count");
  }
  PropensityModel model;
  model.kind_ = PropensityKind::kBoostedTrees;
  model.schema_ = std::move(schema);
  model.initial_scores_ = std::move(initial_scores);
  model.shrinkage_ = shrinkage;
  model.trees_ = std::move(trees);
  return model;
}

PropensityModel PropensityModel::uniform(FeatureSchema schema) {
  const auto k = static_cast<Eigen::Index>(schema.num_arms());
  const auto d = static_cast<Eigen::Index>(schema.num_features()) + 1;
  return logit(std::move(schema), Eigen::MatrixXd::Zero(k, d));
}

void PropensityModel::predict_into(std::span<const double> context, std::span<double> out) const {
  check_context(context, schema_.num_features());
  const std::size_t k = num_arms();
  if (out.size() != k) throw std::invalid_argument("output span has wrong arm count");
  if (kind_ == PropensityKind::kMultinomialLogit) {
    for (std::size_t a = 0; a < k; ++a) {
      const auto row = static_cast<Eigen::Index>(a);
      double score = logit_coefficients_(row, 0);
      for (std::size_t j = 0; j < context.size(); ++j) {
        score += logit_coefficients_(row, static_cast<Eigen::Index>(j) + 1) * context[j];
      }
      out[a] = score;
    }
  } else {
    std::copy(initial_scores_.begin(), initial_scores_.end(), out.begin());
    for (const auto& round : trees_) {
      for (std::size_t a = 0; a < k; ++a) out[a] += shrinkage_ * round[a].predict(context);
    }
  }
  softmax_inplace(out);
}

std::vector<double> PropensityModel::predict(std::span<const double> context) const {
  std::vector<double> out(num_arms());
  predict_into(context, out);
  return out;
}

Eigen::MatrixXd PropensityModel::predict_matrix(const Eigen::MatrixXd& contexts) const {
  if (contexts.cols() != static_cast<Eigen::Index>(schema_.num_features())) {
    throw DataError("context matrix has wrong feature count");
  }
  const auto k = static_cast<Eigen::Index>(num_arms());
  Eigen::MatrixXd out(contexts.rows(), k);
  std::vector<double> row(static_cast<std::size_t>(contexts.cols()));
  std::vector<double> probs(num_arms());
  for (Eigen::Index i = 0; i < contexts.rows(); ++i) {
    for (Eigen::Index j = 0; j < contexts.cols(); ++j) row[static_cast<std::size_t>(j)] = contexts(i, j);
    predict_into(row, probs);
    for (Eigen::Index a = 0; a < k; ++a) out(i, a) = probs[static_cast<std::size_t>(a)];
  }
  return out;
}

Eigen::MatrixXd PropensityModel::predict_matrix(const Dataset& data) const {
  return predict_matrix(data.context_matrix());
}

nlohmann::json PropensityModel::to_json() const {
  nlohmann::json j;
  j["version"] = kModelVersion;
  j["schema"] = schema_;
  if (kind_ == PropensityKind::kMultinomialLogit) {
    j["kind"] = "multinomial_logit";
    auto rows = nlohmann::json::object();
    for (std::size_t a = 0; a < num_arms(); ++a) {
      const auto r = static_cast<Eigen::Index>(a);
      nlohmann::json coefs = nlohmann::json::object();
      for (std::size_t f = 0; f < schema_.num_features(); ++f) {
        coefs[schema_.names()[f]] = logit_coefficients_(r, static_cast<Eigen::Index>(f) + 1);
      }
      rows[schema_.arm_names()[a]] = {{"intercept", logit_coefficients_(r, 0)},
                                      {"coefficients", std::move(coefs)}};
    }
    j["arms"] = std::move(rows);
  } else {
    j["kind"] = "boosted_trees";
    j["initial_scores"] = initial_scores_;
    j["shrinkage"] = shrinkage_;
    j["chosen_iteration"] = trees_.size();
    auto rounds = nlohmann::json::array();
    for (const auto& round : trees_) {
      auto per_arm = nlohmann::json::array();
      for (const auto& tree : round) per_arm.push_back(tree_to_json(tree, 0, schema_.names()));
      rounds.push_back(std::move(per_arm));
    }
    j["trees"] = std::move(rounds);
  }
  return j;
}

PropensityModel PropensityModel::from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kModelVersion) {
      throw DataError("unsupported propensity model version");
    }
    auto schema = j.at("schema").get<FeatureSchema>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "multinomial_logit") {
      Eigen::MatrixXd coefs(static_cast<Eigen::Index>(schema.num_arms()),
                            static_cast<Eigen::Index>(schema.num_features()) + 1);
      for (std::size_t a = 0; a < schema.num_arms(); ++a) {
        const auto& row = j.at("arms").at(schema.arm_names()[a]);
        const auto r = static_cast<Eigen::Index>(a);
        coefs(r, 0) = row.at("intercept").get<double>();
        for (std::size_t f = 0; f < schema.num_features(); ++f) {
          coefs(r, static_cast<Eigen::Index>(f) + 1) =
              row.at("coefficients").at(schema.names()[f]).get<double>();
        }
      }
      return logit(std::move(schema), std::move(coefs));
    }
    if (kind == "boosted_trees") {
      std::vector<std::vector<RegressionTree>> trees;
      for (const auto& round : j.at("trees")) {
        std::vector<RegressionTree> per_arm;
        for (const auto& node : round) {
          RegressionTree tree;
          tree_from_json(node, schema, tree);
          per_arm.push_back(std::move(tree));
        }
        trees.push_back(std::move(per_arm));
      }
      return boosted(std::move(schema), j.at("initial_scores").get<std::vector<double>>(),
                     j.at("shrinkage").get<double>(), std::move(trees));
    }
    throw DataError("unknown propensity model kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid propensity model JSON: ") + e.what());
  }
}

double clip_propensity(double p, double tau, std::size_t num_arms) {
  check_tau(tau, num_arms);
  return std::max(p, tau);
}

BalanceReport asmd(const Dataset& data, std::span<const double> weights) {
  if (weights.size() != data.size()) throw std::invalid_argument("one weight per sample required");
  double total = 0.0;
  for (const double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("balance weights must be finite and non-negative");
    }
    total += w;
  }
  if (total <= 0.0) throw std::invalid_argument("balance weights are all zero");
  const Eigen::MatrixXd x = data.context_matrix();
  const auto actions = data.actions();
  BalanceReport report;
  report.features = data.schema().names();
  report.arms = data.schema().arm_names();
  compute_asmd(x, actions, weights, population_sd(x), data.num_arms(), report);
  return report;
}

std::vector<double> inverse_propensity_weights(const Eigen::MatrixXd& propensities,
                                               std::span<const std::size_t> actions) {
  std::vector<double> w(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i) {
    w[i] = 1.0 / propensities(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(actions[i]));
  }
  return w;
}

PropensityFit fit_gbm_propensity(const Dataset& data, const BoostingConfig& config) {
  config.validate();
  const std::size_t t = data.size();
  const std::size_t k = data.num_arms();
  if (t < k) throw FitError("propensity fit needs at least as many samples as arms");
  require_all_arms(data);

  const Eigen::MatrixXd x = data.context_matrix();
  const auto actions = data.actions();
  const auto sd = population_sd(x);

  std::vector<FeatureBins> bins;
  bins.reserve(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index j = 0; j < x.cols(); ++j) bins.push_back(make_bins(x.col(j), config.max_bins));

  const auto counts = data.arm_counts();
  std::vector<double> initial(k);
  for (std::size_t a = 0; a < k; ++a) {
    initial[a] = std::log(static_cast<double>(counts[a]) / static_cast<double>(t));
  }

  // Row-major T x K raw scores and probabilities.
  std::vector<double> scores(t * k);
  for (std::size_t i = 0; i < t; ++i) std::copy(initial.begin(), initial.end(), &scores[i * k]);
  std::vector<double> probs(t * k);
  auto refresh_probs = [&] {
    std::copy(scores.begin(), scores.end(), probs.begin());
    for (std::size_t i = 0; i < t; ++i) softmax_inplace(std::span<double>(&probs[i * k], k));
  };

  BalanceReport scratch;
  scratch.features = data.schema().names();
  scratch.arms = data.schema().arm_names();
  std::vector<double> weights(t);
  auto balance_at_current = [&] {
    for (std::size_t i = 0; i < t; ++i) weights[i] = 1.0 / probs[i * k + actions[i]];
    compute_asmd(x, actions, weights, sd, k, scratch);
    return scratch.summary(config.aggregation);
  };

  TreeBuilder builder(bins, config, k);
  std::vector<std::vector<RegressionTree>> rounds;
  rounds.reserve(config.max_iterations);
  std::vector<double> residual(t);
  std::vector<double> curvature(t);
  std::vector<std::vector<double>> leaf_values(k, std::vector<double>(t));

  std::vector<BalanceCurvePoint> curve;
  std::size_t best_iteration = 0;
  double best_summary = std::numeric_limits<double>::infinity();
  BalanceReport best_report;

  refresh_probs();
  for (std::size_t iter = 1; iter <= config.max_iterations; ++iter) {
    std::vector<RegressionTree> round;
    round.reserve(k);
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t i = 0; i < t; ++i) {
        const double p = probs[i * k + a];
        residual[i] = (actions[i] == a ? 1.0 : 0.0) - p;
        curvature[i] = p * (1.0 - p);
      }
      round.push_back(builder.build(residual, curvature, leaf_values[a]));
    }
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t i = 0; i < t; ++i) scores[i * k + a] += config.shrinkage * leaf_values[a][i];
    }
    rounds.push_back(std::move(round));
    refresh_probs();

    const bool checkpoint = iter == 1 || iter % config.checkpoint_interval == 0 ||
                            iter == config.max_iterations;
    if (!checkpoint) continue;
    const double summary = balance_at_current();
    curve.push_back({iter, summary});
    if (summary < best_summary) {
      best_summary = summary;
      best_iteration = iter;
      best_report = scratch;
    }
  }

  rounds.resize(best_iteration);
  best_report.iteration_curve = std::move(curve);
  return {PropensityModel::boosted(data.schema(), std::move(initial), config.shrinkage,
                                   std::move(rounds)),
          std::move(best_report)};
}

PropensityModel fit_multinomial_logit(const Dataset& data, double ridge) {
  if (data.size() < data.num_arms()) {
    throw FitError("propensity fit needs at least as many samples as arms");
  }
  const auto actions = data.actions();
  const auto fit = fit_multinomial(data.context_matrix(), actions, data.num_arms(), ridge);
  return PropensityModel::logit(data.schema(), fit.coefficients);
}

}  // namespace cbandit
