#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbandit/dataset.hpp"

namespace cbandit {

// Orientation-invariant acceleration summary: sqrt(x^2 + y^2 + z^2) / 3.
double accel_magnitude(double ax, double ay, double az);

/// A survey row before the multi-strategy split. Missing feature cells are NaN.
struct RawRecord {
  std::vector<double> context;
  std::vector<std::size_t> actions;
  std::optional<double> effectiveness;
  std::string user_id;
};

// One sample per reported action, each carrying the same context and effectiveness.
std::vector<LoggedSample> split_multi_action(const RawRecord& record);

// Fills NaN cells in place: continuous features by column mean, binary by column mode
// (ties resolve to 0). Returns the fill values and per-feature counts; `mask` receives a
// row-major record x feature flag for each imputed cell.
PreprocessStats impute_missing(std::span<RawRecord> records, const FeatureSchema& schema,
                               std::vector<std::uint8_t>& mask);

// Sets Ô to the mean effectiveness over all samples and reward = 1 iff effectiveness > Ô.
Dataset binarize_rewards(const Dataset& data);
// Same rule with a caller-supplied threshold, e.g. a stored Ô.
Dataset binarize_rewards(const Dataset& data, double grand_mean);

// Min/max per continuous feature; empty entries for binary features.
std::vector<std::optional<ScaleRange>> fit_scaling(const Dataset& data);
// (v - min) / (max - min) clamped to [0, 1]; constant ranges map to 0. Binary features untouched.
Dataset apply_scaling(const Dataset& data, const std::vector<std::optional<ScaleRange>>& ranges);
// fit_scaling followed by apply_scaling; the ranges are recorded in the stats.
Dataset scale_features(const Dataset& data);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Seeded shuffle, then k contiguous test blocks whose sizes differ by at most one.
std::vector<Fold> kfold_split(std::size_t num_samples, std::size_t k, std::uint64_t seed);
std::vector<Fold> kfold_split(const Dataset& data, std::size_t k, std::uint64_t seed);

}  // namespace cbandit
