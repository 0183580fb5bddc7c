#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace cbandit {

enum class FeatureKind { kBinary, kContinuous };

std::string_view to_string(FeatureKind kind);
FeatureKind parse_feature_kind(std::string_view text);

/// Feature names with their kinds, plus the K arm labels.
///
/// Names are unique, kinds line up with names, and there are at least two arms.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  FeatureSchema(std::vector<std::string> names, std::vector<FeatureKind> kinds,
                std::vector<std::string> arm_names);

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<FeatureKind>& kinds() const { return kinds_; }
  const std::vector<std::string>& arm_names() const { return arm_names_; }

  std::size_t num_features() const { return names_.size(); }
  std::size_t num_arms() const { return arm_names_.size(); }

  std::optional<std::size_t> feature_index(std::string_view name) const;
  std::optional<std::size_t> arm_index(std::string_view label) const;

  bool operator==(const FeatureSchema&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<FeatureKind> kinds_;
  std::vector<std::string> arm_names_;
};

void to_json(nlohmann::json& j, const FeatureSchema& schema);
void from_json(const nlohmann::json& j, FeatureSchema& schema);

}  // namespace cbandit
