#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "cbandit/schema.hpp"

namespace cbandit {

/// One logged (context, action, reward) record.
struct LoggedSample {
  std::vector<double> context;
  std::size_t action = 0;
  int reward = 0;
  // Self-reported effectiveness on the 0..10 scale, absent when never reported.
  std::optional<double> effectiveness_raw;
  std::string user_id;

  bool operator==(const LoggedSample&) const = default;
};

struct ScaleRange {
  double min = 0.0;
  double max = 0.0;
  bool operator==(const ScaleRange&) const = default;
};

/// Statistics learned during preprocessing, reused on held-out data.
struct PreprocessStats {
  // Grand mean of effectiveness used as the reward threshold.
  std::optional<double> grand_mean;
  // Per-feature min/max; empty for binary features or before scaling.
  std::vector<std::optional<ScaleRange>> scaling;
  // Per-feature imputation fill value; empty when nothing was imputed.
  std::vector<double> fill_values;
  std::vector<std::size_t> imputed_counts;

  bool operator==(const PreprocessStats&) const = default;
};

void to_json(nlohmann::json& j, const PreprocessStats& stats);
void from_json(const nlohmann::json& j, PreprocessStats& stats);

/// An ordered, non-empty collection of samples conforming to one schema.
class Dataset {
 public:
  Dataset(FeatureSchema schema, std::vector<LoggedSample> samples, PreprocessStats stats = {},
          std::vector<std::uint8_t> missing_mask = {});

  const FeatureSchema& schema() const { return schema_; }
  std::span<const LoggedSample> samples() const { return samples_; }
  const LoggedSample& operator[](std::size_t i) const { return samples_[i]; }
  const PreprocessStats& stats() const { return stats_; }

  std::size_t size() const { return samples_.size(); }
  std::size_t num_features() const { return schema_.num_features(); }
  std::size_t num_arms() const { return schema_.num_arms(); }

  // Row-major T x F mask of cells that were imputed; empty when nothing was missing.
  const std::vector<std::uint8_t>& missing_mask() const { return missing_mask_; }

  // T x F design matrix.
  Eigen::MatrixXd context_matrix() const;
  std::vector<std::size_t> actions() const;
  Eigen::VectorXd rewards() const;
  std::vector<std::size_t> arm_counts() const;

  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset with_samples(std::vector<LoggedSample> samples) const;
  Dataset with_stats(PreprocessStats stats) const;

  bool operator==(const Dataset&) const = default;

 private:
  FeatureSchema schema_;
  std::vector<LoggedSample> samples_;
  PreprocessStats stats_;
  std::vector<std::uint8_t> missing_mask_;
};

}  // namespace cbandit
