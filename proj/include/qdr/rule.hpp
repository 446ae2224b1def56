#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qdr/errors.hpp"

namespace qdr {

// Linear index of a sign-normalized coefficient vector (sign, tail...) at x.
// Every decision in the library goes through this one function so that the
// literal and fast evaluation paths agree bit-for-bit.
inline double index_value(int sign, std::span<const double> tail, const double* x) {
  double s = static_cast<double>(sign) * x[0];
  for (std::size_t j = 0; j < tail.size(); ++j) s += tail[j] * x[j + 1];
  return s;
}

// d(x) = I(sign * x_1 + tail . x_rest > 0), |leading coefficient| = 1.
struct IndexRule {
  int sign = 1;
  std::vector<double> tail;

  std::size_t dim() const { return tail.size() + 1; }

  void check_dim(std::size_t p) const {
    if (p != dim())
      throw parameter_error("rule dimension " + std::to_string(dim()) +
                            " does not match covariate dimension " + std::to_string(p));
  }

  int decide(std::span<const double> x) const {
    check_dim(x.size());
    return index_value(sign, tail, x.data()) > 0.0 ? 1 : 0;
  }

  std::vector<double> coefficients() const {
    std::vector<double> c{static_cast<double>(sign)};
    c.insert(c.end(), tail.begin(), tail.end());
    return c;
  }

  friend bool operator==(const IndexRule&, const IndexRule&) = default;
};

inline void validate_rule(const IndexRule& r) {
  if (r.sign != 1 && r.sign != -1) throw parameter_error("rule sign must be -1 or +1");
}

}  // namespace qdr
