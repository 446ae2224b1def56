#pragma once

#include <stdexcept>
#include <string>

namespace qdr {

// Malformed input: CSV cells, record invariants, config values. CLI exit code 2.
class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid tuning parameter passed to an estimator (tau, bandwidth, cutoff...). CLI exit code 2.
class parameter_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The estimator could not produce an answer on valid input. CLI exit code 1.
class estimation_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qdr
