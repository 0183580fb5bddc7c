#include "cbandit/schema.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "cbandit/error.hpp"

namespace cbandit {

void check_tau(double tau, std::size_t num_arms) {
  if (num_arms == 0) throw TauBoundError("trimming check needs at least one arm");
  const double bound = 1.0 / static_cast<double>(num_arms);
  if (!std::isfinite(tau) || tau < 0.0 || tau >= bound) {
    std::ostringstream msg;
    msg << "trimming level tau=" << tau << " violates the heuristic bound tau < 1/k = " << bound
        << " for k=" << num_arms << " arms";
    throw TauBoundError(msg.str());
  }
}

std::string_view to_string(FeatureKind kind) {
  return kind == FeatureKind::kBinary ? "binary" : "continuous";
}

FeatureKind parse_feature_kind(std::string_view text) {
  if (text == "binary") return FeatureKind::kBinary;
  if (text == "continuous") return FeatureKind::kContinuous;
  throw DataError("unknown feature kind '" + std::string(text) + "'");
}

FeatureSchema::FeatureSchema(std::vector<std::string> names, std::vector<FeatureKind> kinds,
                             std::vector<std::string> arm_names)
    : names_(std::move(names)), kinds_(std::move(kinds)), arm_names_(std::move(arm_names)) {
  if (names_.size() != kinds_.size()) {
    throw DataError("schema has " + std::to_string(names_.size()) + " feature names but " +
                    std::to_string(kinds_.size()) + " kinds");
  }
  if (arm_names_.size() < 2) throw DataError("schema needs at least two arms");
  std::unordered_set<std::string> seen;
  for (const auto& name : names_) {
    if (name.empty()) throw DataError("empty feature name in schema");
    if (!seen.insert(name).second) throw DataError("duplicate feature name '" + name + "'");
  }
  seen.clear();
  for (const auto& arm : arm_names_) {
    if (arm.empty() || arm.find(';') != std::string::npos) {
      throw DataError("invalid arm label '" + arm + "'");
    }
    if (!seen.insert(arm).second) throw DataError("duplicate arm label '" + arm + "'");
  }
}

std::optional<std::size_t> FeatureSchema::feature_index(std::string_view name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::optional<std::size_t> FeatureSchema::arm_index(std::string_view label) const {
  const auto it = std::find(arm_names_.begin(), arm_names_.end(), label);
  if (it == arm_names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - arm_names_.begin());
}

void to_json(nlohmann::json& j, const FeatureSchema& schema) {
  auto features = nlohmann::json::array();
  for (std::size_t f = 0; f < schema.num_features(); ++f) {
    features.push_back({{"name", schema.names()[f]}, {"kind", to_string(schema.kinds()[f])}});
  }
  j = {{"features", std::move(features)}, {"arms", schema.arm_names()}};
}

void from_json(const nlohmann::json& j, FeatureSchema& schema) {
  std::vector<std::string> names;
  std::vector<FeatureKind> kinds;
  try {
    for (const auto& feature : j.at("features")) {
      names.push_back(feature.at("name").get<std::string>());
      kinds.push_back(parse_feature_kind(feature.value("kind", "continuous")));
    }
    schema = FeatureSchema(std::move(names), std::move(kinds),
                           j.at("arms").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid schema: ") + e.what());
  }
}

}  // namespace cbandit
