#include "cbandit/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cbandit/error.hpp"

namespace cbandit {

double accel_magnitude(double ax, double ay, double az) {
  return std::sqrt(ax * ax + ay * ay + az * az) / 3.0;
}

std::vector<LoggedSample> split_multi_action(const RawRecord& record) {
  if (record.actions.empty()) throw DataError("record has an empty action set");
  std::vector<LoggedSample> out;
  out.reserve(record.actions.size());
  for (const std::size_t action : record.actions) {
    LoggedSample s;
    s.context = record.context;
    s.action = action;
    s.effectiveness_raw = record.effectiveness;
    s.user_id = record.user_id;
    out.push_back(std::move(s));
  }
  return out;
}

PreprocessStats impute_missing(std::span<RawRecord> records, const FeatureSchema& schema,
                               std::vector<std::uint8_t>& mask) {
  const std::size_t f = schema.num_features();
  PreprocessStats stats;
  stats.fill_values.assign(f, 0.0);
  stats.imputed_counts.assign(f, 0);
  mask.assign(records.size() * f, 0);

  for (std::size_t j = 0; j < f; ++j) {
    double sum = 0.0;
    std::size_t observed = 0;
    std::size_t ones = 0;
    for (const auto& rec : records) {
      const double v = rec.context[j];
      if (std::isnan(v)) continue;
      sum += v;
      ++observed;
      if (v != 0.0) ++ones;
    }
    double fill = 0.0;
    if (observed > 0) {
      fill = schema.kinds()[j] == FeatureKind::kBinary ? (2 * ones > observed ? 1.0 : 0.0)
                                                        : sum / static_cast<double>(observed);
    }
    stats.fill_values[j] = fill;
    for (std::size_t i = 0; i < records.size(); ++i) {
      double& v = records[i].context[j];
      if (!std::isnan(v)) continue;
      v = fill;
      mask[i * f + j] = 1;
      ++stats.imputed_counts[j];
    }
  }
  return stats;
}

Dataset binarize_rewards(const Dataset& data) {
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& e = data[i].effectiveness_raw;
    if (!e) throw DataError("sample " + std::to_string(i) + " has no effectiveness to binarize");
    sum += *e;
  }
  return binarize_rewards(data, sum / static_cast<double>(data.size()));
}

Dataset binarize_rewards(const Dataset& data, double grand_mean) {
  std::vector<LoggedSample> samples(data.samples().begin(), data.samples().end());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& e = samples[i].effectiveness_raw;
    if (!e) throw DataError("sample " + std::to_string(i) + " has no effectiveness to binarize");
    samples[i].reward = *e > grand_mean ? 1 : 0;
  }
  PreprocessStats stats = data.stats();
  stats.grand_mean = grand_mean;
  return Dataset(data.schema(), std::move(samples), std::move(stats), data.missing_mask());
}

std::vector<std::optional<ScaleRange>> fit_scaling(const Dataset& data) {
  const std::size_t f = data.num_features();
  std::vector<std::optional<ScaleRange>> ranges(f);
  for (std::size_t j = 0; j < f; ++j) {
    if (data.schema().kinds()[j] != FeatureKind::kContinuous) continue;
    ScaleRange range{data[0].context[j], data[0].context[j]};
    for (const auto& s : data.samples()) {
      range.min = std::min(range.min, s.context[j]);
      range.max = std::max(range.max, s.context[j]);
    }
    ranges[j] = range;
  }
  return ranges;
}

Dataset apply_scaling(const Dataset& data, const std::vector<std::optional<ScaleRange>>& ranges) {
  if (ranges.size() != data.num_features()) {
    throw DataError("scaling ranges do not match the schema");
  }
  std::vector<LoggedSample> samples(data.samples().begin(), data.samples().end());
  for (std::size_t j = 0; j < ranges.size(); ++j) {
    if (!ranges[j] || data.schema().kinds()[j] != FeatureKind::kContinuous) continue;
    const double lo = ranges[j]->min;
    const double width = ranges[j]->max - lo;
    for (auto& s : samples) {
      double& v = s.context[j];
      v = width > 0.0 ? std::clamp((v - lo) / width, 0.0, 1.0) : 0.0;
    }
  }
  PreprocessStats stats = data.stats();
  stats.scaling = ranges;
  return Dataset(data.schema(), std::move(samples), std::move(stats), data.missing_mask());
}

Dataset scale_features(const Dataset& data) { return apply_scaling(data, fit_scaling(data)); }

std::vector<Fold> kfold_split(std::size_t num_samples, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("k-fold split needs k >= 2");
  if (k > num_samples) {
    throw std::invalid_argument("k-fold split needs k <= T (k=" + std::to_string(k) +
                                ", T=" + std::to_string(num_samples) + ")");
  }
  std::vector<std::size_t> order(num_samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit bounded draw so the permutation does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = num_samples; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }

  std::vector<Fold> folds(k);
  const std::size_t base = num_samples / k;
  const std::size_t extra = num_samples % k;
  std::size_t start = 0;
  for (std::size_t fold = 0; fold < k; ++fold) {
    const std::size_t len = base + (fold < extra ? 1 : 0);
    std::vector<std::uint8_t> in_test(num_samples, 0);
    for (std::size_t p = start; p < start + len; ++p) in_test[order[p]] = 1;
    for (std::size_t i = 0; i < num_samples; ++i) {
      (in_test[i] ? folds[fold].test : folds[fold].train).push_back(i);
    }
    start += len;
  }
  return folds;
}

std::vector<Fold> kfold_split(const Dataset& data, std::size_t k, std::uint64_t seed) {
  return kfold_split(data.size(), k, seed);
}

}  // namespace cbandit
