#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cbandit/dataset.hpp"
#include "cbandit/schema.hpp"
#include "cbandit/synth.hpp"

namespace cbandit::testing {

inline FeatureSchema make_schema(std::size_t num_binary, std::size_t num_continuous,
                                 std::size_t num_arms) {
  std::vector<std::string> names;
  std::vector<FeatureKind> kinds;
  for (std::size_t j = 0; j < num_binary; ++j) {
    names.push_back("b" + std::to_string(j));
    kinds.push_back(FeatureKind::kBinary);
  }
  for (std::size_t j = 0; j < num_continuous; ++j) {
    names.push_back("c" + std::to_string(j));
    kinds.push_back(FeatureKind::kContinuous);
  }
  std::vector<std::string> arms;
  for (std::size_t a = 0; a < num_arms; ++a) arms.push_back("S" + std::to_string(a + 1));
  return FeatureSchema(names, kinds, arms);
}

inline LoggedSample sample(std::vector<double> x, std::size_t a, int r,
                           std::optional<double> e = std::nullopt) {
  LoggedSample s;
  s.context = std::move(x);
  s.action = a;
  s.reward = r;
  s.effectiveness_raw = e;
  return s;
}

inline SynthConfig small_synth(std::size_t t, std::size_t k, std::uint64_t seed) {
  SynthConfig c;
  c.num_samples = t;
  c.num_arms = k;
  c.num_binary = 3;
  c.num_continuous = 3;
  c.num_informative = 2;
  c.seed = seed;
  return c;
}

inline Eigen::MatrixXd random_simplex_rows(Eigen::Index rows, Eigen::Index cols, SplitMix& rng) {
  Eigen::MatrixXd p(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    double total = 0.0;
    for (Eigen::Index a = 0; a < cols; ++a) {
      p(i, a) = 0.05 + rng.uniform();
      total += p(i, a);
    }
    p.row(i) /= total;
  }
  return p;
}

}  // namespace cbandit::testing
