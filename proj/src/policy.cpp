#include "cbandit/policy.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "cbandit/error.hpp"

namespace cbandit {
namespace {

constexpr int kPolicyVersion = 1;

void check_width(std::span<const double> context, std::size_t expected) {
  if (context.size() != expected) {
    throw DataError("context has " + std::to_string(context.size()) +
                    " features, policy expects " + std::to_string(expected));
  }
}

double linear_score(double intercept, const Eigen::VectorXd& coefficients,
                    std::span<const double> context) {
  double z = intercept;
  for (std::size_t j = 0; j < context.size(); ++j) {
    z += coefficients[static_cast<Eigen::Index>(j)] * context[j];
  }
  return z;
}

int build_node(std::vector<OffsetTreePolicy::Node>& nodes, std::size_t first, std::size_t end,
               std::size_t num_features) {
  const int id = static_cast<int>(nodes.size());
  nodes.emplace_back();
  const std::size_t split = first + (end - first + 1) / 2;
  int left = -1;
  int right = -1;
  if (split - first > 1) left = build_node(nodes, first, split, num_features);
  if (end - split > 1) right = build_node(nodes, split, end, num_features);
  auto& node = nodes[static_cast<std::size_t>(id)];
  node.first_arm = first;
  node.split_arm = split;
  node.end_arm = end;
  node.left = left;
  node.right = right;
  node.coefficients = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_features));
  return id;
}

}  // namespace

std::vector<double> Policy::probabilities(std::span<const double> context,
                                          std::size_t logged_action) const {
  std::vector<double> out(num_arms());
  probabilities(context, logged_action, out);
  return out;
}

Eigen::MatrixXd policy_matrix(const Policy& policy, const Dataset& data) {
  if (policy.num_arms() != data.num_arms()) {
    throw DataError("policy and dataset disagree on the arm count");
  }
  const auto k = static_cast<Eigen::Index>(data.num_arms());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(data.size()), k);
  std::vector<double> row(data.num_arms());
  for (std::size_t i = 0; i < data.size(); ++i) {
    policy.probabilities(data[i].context, data[i].action, row);
    for (Eigen::Index a = 0; a < k; ++a) {
      out(static_cast<Eigen::Index>(i), a) = row[static_cast<std::size_t>(a)];
    }
  }
  return out;
}

void DeterministicPolicy::probabilities(std::span<const double> context, std::size_t,
                                        std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  out[decide(context)] = 1.0;
}

LinearPolicy::LinearPolicy(FeatureSchema schema, Eigen::MatrixXd coefficients,
                           Eigen::VectorXd intercepts)
    : schema_(std::move(schema)),
      coefficients_(std::move(coefficients)),
      intercepts_(std::move(intercepts)) {
  if (coefficients_.rows() != static_cast<Eigen::Index>(schema_.num_arms()) ||
      coefficients_.cols() != static_cast<Eigen::Index>(schema_.num_features()) ||
      intercepts_.size() != static_cast<Eigen::Index>(schema_.num_arms())) {
    throw DataError("linear policy coefficients do not match the schema");
  }
}

Eigen::VectorXd LinearPolicy::scores(std::span<const double> context) const {
  check_width(context, schema_.num_features());
  const Eigen::Map<const Eigen::VectorXd> x(context.data(),
                                            static_cast<Eigen::Index>(context.size()));
  return coefficients_ * x + intercepts_;
}

std::size_t LinearPolicy::decide(std::span<const double> context) const {
  const Eigen::VectorXd s = scores(context);
  Eigen::Index best = 0;
  for (Eigen::Index a = 1; a < s.size(); ++a) {
    if (s[a] > s[best]) best = a;
  }
  return static_cast<std::size_t>(best);
}

nlohmann::json LinearPolicy::to_json() const {
  nlohmann::json arms = nlohmann::json::object();
  for (std::size_t a = 0; a < num_arms(); ++a) {
    const auto r = static_cast<Eigen::Index>(a);
    nlohmann::json coefs = nlohmann::json::object();
    for (std::size_t f = 0; f < schema_.num_features(); ++f) {
      coefs[schema_.names()[f]] = coefficients_(r, static_cast<Eigen::Index>(f));
    }
    arms[schema_.arm_names()[a]] = {{"intercept", intercepts_[r]},
                                    {"coefficients", std::move(coefs)}};
  }
  return {{"version", kPolicyVersion},
          {"kind", "linear"},
          {"schema", schema_},
          {"arms", std::move(arms)}};
}

LinearPolicy LinearPolicy::from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind").get<std::string>() != "linear") throw DataError("not a linear policy");
    if (j.at("version").get<int>() != kPolicyVersion) throw DataError("unsupported policy version");
    auto schema = j.at("schema").get<FeatureSchema>();
    const auto k = static_cast<Eigen::Index>(schema.num_arms());
    const auto f = static_cast<Eigen::Index>(schema.num_features());
    Eigen::MatrixXd coefs(k, f);
    Eigen::VectorXd intercepts(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      const auto& arm = j.at("arms").at(schema.arm_names()[static_cast<std::size_t>(a)]);
      intercepts[a] = arm.at("intercept").get<double>();
      for (Eigen::Index c = 0; c < f; ++c) {
        coefs(a, c) = arm.at("coefficients").at(schema.names()[static_cast<std::size_t>(c)]);
      }
    }
    return LinearPolicy(std::move(schema), std::move(coefs), std::move(intercepts));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid linear policy JSON: ") + e.what());
  }
}

std::vector<OffsetTreePolicy::Node> OffsetTreePolicy::build_shape(std::size_t num_arms,
                                                                   std::size_t num_features) {
  if (num_arms < 2) throw std::invalid_argument("offset tree needs at least two arms");
  std::vector<Node> nodes;
  build_node(nodes, 0, num_arms, num_features);
  return nodes;
}

OffsetTreePolicy::OffsetTreePolicy(FeatureSchema schema, std::vector<Node> nodes)
    : schema_(std::move(schema)), nodes_(std::move(nodes)) {
  const auto shape = build_shape(schema_.num_arms(), schema_.num_features());
  if (shape.size() != nodes_.size()) throw DataError("offset tree does not match the arm count");
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    const auto& a = shape[n];
    const auto& b = nodes_[n];
    if (a.first_arm != b.first_arm || a.split_arm != b.split_arm || a.end_arm != b.end_arm ||
        a.left != b.left || a.right != b.right) {
      throw DataError("offset tree node " + std::to_string(n) + " is not in balanced order");
    }
    if (b.coefficients.size() != static_cast<Eigen::Index>(schema_.num_features())) {
      throw DataError("offset tree node " + std::to_string(n) + " has wrong coefficient count");
    }
  }
}

std::pair<std::size_t, std::size_t> OffsetTreePolicy::route(
    std::span<const double> context) const {
  check_width(context, schema_.num_features());
  std::size_t id = 0;
  std::size_t visited = 0;
  while (true) {
    const Node& node = nodes_[id];
    ++visited;
    const bool go_right =
        node.trained && linear_score(node.intercept, node.coefficients, context) > 0.0;
    const int child = go_right ? node.right : node.left;
    if (child < 0) return {go_right ? node.split_arm : node.first_arm, visited};
    id = static_cast<std::size_t>(child);
  }
}

std::size_t OffsetTreePolicy::decide(std::span<const double> context) const {
  return route(context).first;
}

std::size_t OffsetTreePolicy::depth() const {
  std::vector<std::size_t> level(nodes_.size(), 1);
  std::size_t deepest = 0;
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    deepest = std::max(deepest, level[n]);
    for (const int child : {nodes_[n].left, nodes_[n].right}) {
      if (child >= 0) level[static_cast<std::size_t>(child)] = level[n] + 1;
    }
  }
  return deepest;
}

nlohmann::json OffsetTreePolicy::to_json() const {
  auto nodes = nlohmann::json::array();
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    const auto& node = nodes_[n];
    nlohmann::json coefs = nlohmann::json::object();
    for (std::size_t f = 0; f < schema_.num_features(); ++f) {
      coefs[schema_.names()[f]] = node.coefficients[static_cast<Eigen::Index>(f)];
    }
    nodes.push_back({{"id", n},
                     {"arms", {node.first_arm, node.end_arm}},
                     {"split_arm", node.split_arm},
                     {"left", node.left < 0 ? nlohmann::json(nullptr) : nlohmann::json(node.left)},
                     {"right",
                      node.right < 0 ? nlohmann::json(nullptr) : nlohmann::json(node.right)},
                     {"trained", node.trained},
                     {"intercept", node.intercept},
                     {"coefficients", std::move(coefs)}});
  }
  return {{"version", kPolicyVersion},
          {"kind", "offset_tree"},
          {"schema", schema_},
          {"depth", depth()},
          {"nodes", std::move(nodes)}};
}

OffsetTreePolicy OffsetTreePolicy::from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind").get<std::string>() != "offset_tree") throw DataError("not an offset tree");
    if (j.at("version").get<int>() != kPolicyVersion) throw DataError("unsupported policy version");
    auto schema = j.at("schema").get<FeatureSchema>();
    std::vector<Node> nodes;
    for (const auto& record : j.at("nodes")) {
      Node node;
      node.first_arm = record.at("arms").at(0).get<std::size_t>();
      node.end_arm = record.at("arms").at(1).get<std::size_t>();
      node.split_arm = record.at("split_arm").get<std::size_t>();
      node.left = record.at("left").is_null() ? -1 : record.at("left").get<int>();
      node.right = record.at("right").is_null() ? -1 : record.at("right").get<int>();
      node.trained = record.at("trained").get<bool>();
      node.intercept = record.at("intercept").get<double>();
      node.coefficients.resize(static_cast<Eigen::Index>(schema.num_features()));
      for (std::size_t f = 0; f < schema.num_features(); ++f) {
        node.coefficients[static_cast<Eigen::Index>(f)] =
            record.at("coefficients").at(schema.names()[f]).get<double>();
      }
      nodes.push_back(std::move(node));
    }
    return OffsetTreePolicy(std::move(schema), std::move(nodes));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid offset tree JSON: ") + e.what());
  }
}

BaselinePolicy::BaselinePolicy(BaselineKind kind, std::size_t num_arms)
    : kind_(kind), num_arms_(num_arms) {
  if (num_arms_ < 1) throw std::invalid_argument("baseline policy needs at least one arm");
}

void BaselinePolicy::probabilities(std::span<const double>, std::size_t logged_action,
                                   std::span<double> out) const {
  if (kind_ == BaselineKind::kRandom) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(num_arms_));
    return;
  }
  if (logged_action >= num_arms_) throw std::out_of_range("logged action out of range");
  std::fill(out.begin(), out.end(), 0.0);
  out[logged_action] = 1.0;
}

BaselinePolicy make_baseline(BaselineKind kind, std::size_t num_arms) {
  return BaselinePolicy(kind, num_arms);
}

BehaviorPolicy::BehaviorPolicy(std::shared_ptr<const PropensityModel> model)
    : model_(std::move(model)) {
  if (!model_) throw std::invalid_argument("behavior policy needs a propensity model");
}

void BehaviorPolicy::probabilities(std::span<const double> context, std::size_t,
                                   std::span<double> out) const {
  model_->predict_into(context, out);
}

}  // namespace cbandit
