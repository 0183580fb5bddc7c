#include "cbandit/dataset.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "cbandit/error.hpp"

namespace cbandit {

Dataset::Dataset(FeatureSchema schema, std::vector<LoggedSample> samples, PreprocessStats stats,
                 std::vector<std::uint8_t> missing_mask)
    : schema_(std::move(schema)),
      samples_(std::move(samples)),
      stats_(std::move(stats)),
      missing_mask_(std::move(missing_mask)) {
  if (samples_.empty()) throw DataError("dataset must contain at least one sample");
  const std::size_t f = schema_.num_features();
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    if (s.context.size() != f) {
      throw DataError("sample " + std::to_string(i) + " has " + std::to_string(s.context.size()) +
                      " features, schema has " + std::to_string(f));
    }
    if (s.action >= schema_.num_arms()) {
      throw DataError("sample " + std::to_string(i) + " has action index " +
                      std::to_string(s.action) + " outside the arm set");
    }
    if (s.reward != 0 && s.reward != 1) {
      throw DataError("sample " + std::to_string(i) + " has non-binary reward");
    }
    if (s.effectiveness_raw && !(*s.effectiveness_raw >= 0.0 && *s.effectiveness_raw <= 10.0)) {
      throw DataError("sample " + std::to_string(i) + " has effectiveness outside [0, 10]");
    }
  }
  if (!missing_mask_.empty() && missing_mask_.size() != samples_.size() * f) {
    throw DataError("missing-value mask does not match dataset shape");
  }
}

Eigen::MatrixXd Dataset::context_matrix() const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(num_features()));
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t j = 0; j < num_features(); ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = samples_[i].context[j];
    }
  }
  return x;
}

std::vector<std::size_t> Dataset::actions() const {
  std::vector<std::size_t> out;
  out.reserve(size());
  for (const auto& s : samples_) out.push_back(s.action);
  return out;
}

Eigen::VectorXd Dataset::rewards() const {
  Eigen::VectorXd r(static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) r[static_cast<Eigen::Index>(i)] = samples_[i].reward;
  return r;
}

std::vector<std::size_t> Dataset::arm_counts() const {
  std::vector<std::size_t> counts(num_arms(), 0);
  for (const auto& s : samples_) ++counts[s.action];
  return counts;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<LoggedSample> picked;
  picked.reserve(indices.size());
  std::vector<std::uint8_t> mask;
  const std::size_t f = num_features();
  for (const std::size_t i : indices) {
    if (i >= size()) throw std::out_of_range("subset index out of range");
    picked.push_back(samples_[i]);
    if (!missing_mask_.empty()) {
      mask.insert(mask.end(), missing_mask_.begin() + static_cast<std::ptrdiff_t>(i * f),
                  missing_mask_.begin() + static_cast<std::ptrdiff_t>((i + 1) * f));
    }
  }
  return Dataset(schema_, std::move(picked), stats_, std::move(mask));
}

Dataset Dataset::with_samples(std::vector<LoggedSample> samples) const {
  std::vector<std::uint8_t> mask;
  if (samples.size() == samples_.size()) mask = missing_mask_;
  return Dataset(schema_, std::move(samples), stats_, std::move(mask));
}

Dataset Dataset::with_stats(PreprocessStats stats) const {
  return Dataset(schema_, samples_, std::move(stats), missing_mask_);
}

void to_json(nlohmann::json& j, const PreprocessStats& stats) {
  j = nlohmann::json::object();
  j["grand_mean"] = stats.grand_mean ? nlohmann::json(*stats.grand_mean) : nlohmann::json();
  auto scaling = nlohmann::json::array();
  for (const auto& range : stats.scaling) {
    if (range) {
      scaling.push_back({{"min", range->min}, {"max", range->max}});
    } else {
      scaling.push_back(nullptr);
    }
  }
  j["scaling"] = std::move(scaling);
  j["fill_values"] = stats.fill_values;
  j["imputed_counts"] = stats.imputed_counts;
}

void from_json(const nlohmann::json& j, PreprocessStats& stats) {
  stats = {};
  try {
    if (j.contains("grand_mean") && !j.at("grand_mean").is_null()) {
      stats.grand_mean = j.at("grand_mean").get<double>();
    }
    if (j.contains("scaling")) {
      for (const auto& range : j.at("scaling")) {
        if (range.is_null()) {
          stats.scaling.emplace_back();
        } else {
          stats.scaling.emplace_back(
              ScaleRange{range.at("min").get<double>(), range.at("max").get<double>()});
        }
      }
    }
    stats.fill_values = j.value("fill_values", std::vector<double>{});
    stats.imputed_counts = j.value("imputed_counts", std::vector<std::size_t>{});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid preprocessing stats: ") + e.what());
  }
  if (stats.grand_mean && !(*stats.grand_mean >= 0.0 && *stats.grand_mean <= 10.0)) {
    throw DataError("grand mean outside [0, 10]");
  }
  for (const auto& range : stats.scaling) {
    if (range && !(range->min <= range->max)) throw DataError("scaling range has min > max");
  }
}

}  // namespace cbandit
