#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cbandit {

// Malformed input files, schema violations, and invalid configuration.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A model fit or learner failed on otherwise valid input.
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Trimming level outside [0, 1/k).
class TauBoundError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Throws TauBoundError unless 0 <= tau < 1/num_arms.
void check_tau(double tau, std::size_t num_arms);

}  // namespace cbandit
