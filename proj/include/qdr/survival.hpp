#pragma once

// Censoring-survival estimation: product-limit (Kaplan-Meier) and the
// kernel-weighted local product-limit estimator conditional on one covariate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "qdr/dataio.hpp"
#include "qdr/errors.hpp"

namespace qdr {

// Right-continuous nonincreasing step function, 1 before the first jump.
class SurvivalCurve {
 public:
  SurvivalCurve() = default;

  SurvivalCurve(std::vector<double> jump_times, std::vector<double> values)
      : times_(std::move(jump_times)), values_(std::move(values)) {
    if (times_.size() != values_.size())
      throw parameter_error("survival curve: times and values differ in length");
    double prev = 1.0;
    for (std::size_t k = 0; k < times_.size(); ++k) {
      if (k > 0 && !(times_[k] > times_[k - 1]))
        throw parameter_error("survival curve: jump times must be strictly increasing");
      if (!(values_[k] >= 0.0 && values_[k] <= prev))
        throw parameter_error("survival curve: values must be nonincreasing in [0,1]");
      prev = values_[k];
    }
  }

  // S(t): value after the last jump at or before t.
  double operator()(double t) const {
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    return it == times_.begin() ? 1.0 : values_[static_cast<std::size_t>(it - times_.begin()) - 1];
  }

  // S(t-): value after the last jump strictly before t.
  double left_limit(double t) const {
    const auto it = std::lower_bound(times_.begin(), times_.end(), t);
    return it == times_.begin() ? 1.0 : values_[static_cast<std::size_t>(it - times_.begin()) - 1];
  }

  const std::vector<double>& jump_times() const { return times_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> times_;
  std::vector<double> values_;
};

// Product-limit estimate of P(T > t) from (time, is_event) pairs. The risk set
// at t is {i : time_i >= t}, so tied non-events at t remain at risk.
inline SurvivalCurve kaplan_meier(const std::vector<double>& time, const std::vector<int>& is_event) {
  if (time.size() != is_event.size())
    throw parameter_error("kaplan_meier: time and indicator lengths differ");
  std::vector<std::size_t> order(time.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return time[a] < time[b]; });

  std::vector<double> jumps, values;
  double s = 1.0;
  std::size_t at_risk = time.size();
  for (std::size_t i = 0; i < order.size();) {
    const double t = time[order[i]];
    std::size_t tied = 0, events = 0;
    while (i < order.size() && time[order[i]] == t) {
      events += is_event[order[i]] != 0;
      ++tied;
      ++i;
    }
    if (events > 0) {
      s *= 1.0 - static_cast<double>(events) / static_cast<double>(at_risk);
      jumps.push_back(t);
      values.push_back(s);
    }
    at_risk -= tied;
  }
  return SurvivalCurve(std::move(jumps), std::move(values));
}

// KM of the censoring distribution: censoring (delta = 0) is the event.
inline SurvivalCurve km_censoring(const StaticDataset& ds) {
  std::vector<double> y;
  std::vector<int> c;
  y.reserve(ds.size());
  c.reserve(ds.size());
  for (const auto& r : ds.records()) {
    y.push_back(r.y);
    c.push_back(1 - r.delta);
  }
  return kaplan_meier(y, c);
}

inline SurvivalCurve km_censoring(const DynamicDataset& ds) {
  std::vector<double> y;
  std::vector<int> c;
  y.reserve(ds.size());
  c.reserve(ds.size());
  for (const auto& r : ds.records()) {
    y.push_back(r.y);
    c.push_back(1 - r.delta);
  }
  return kaplan_meier(y, c);
}

// ---------------------------------------------------------------------------
// Local Kaplan-Meier

struct KernelSpec {
  enum class Kind { gaussian_density, normal_cdf };
  Kind kind = Kind::gaussian_density;
  double bandwidth = 0.1;

  double operator()(double u) const {
    if (kind == Kind::gaussian_density) return std::exp(-0.5 * u * u) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    return 0.5 * std::erfc(-u / std::numbers::sqrt2);
  }
};

inline void validate_kernel(const KernelSpec& k) {
  if (!(k.bandwidth > 0.0) || !std::isfinite(k.bandwidth))
    throw parameter_error("kernel bandwidth must be positive");
}

struct LocalKmOptions {
  // Arms up to this size evaluate the estimator exactly at every record; larger
  // arms tabulate it on an equally spaced covariate grid and interpolate
  // linearly in the covariate.
  std::size_t exact_limit = 5000;
  std::size_t grid_points = 201;
};

// Censoring survival G_C(t | x, arm). Nadaraya-Watson weights B_k(x) =
// K((x - x_k)/h) / sum_l K((x - x_l)/h) over the arm; the product runs over
// distinct censoring times c <= t with factor 1 - b(c) / sum_{y_k >= c} B_k,
// where b(c) sums the weights of records censored at c. Without tied
// censoring times this is one factor per censored record.
class LocalKaplanMeier {
 public:
  LocalKaplanMeier(const StaticDataset& ds, int arm, std::size_t cov_index, KernelSpec kernel,
                   LocalKmOptions options = {})
      : kernel_(kernel), options_(options), arm_(arm) {
    validate_kernel(kernel);
    if (arm != 0 && arm != 1) throw parameter_error("local KM: arm must be 0 or 1");
    if (cov_index >= ds.dim()) throw parameter_error("local KM: covariate index out of range");
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& r = ds[i];
      if (r.a != arm) continue;
      members_.push_back(i);
      y_.push_back(r.y);
      x_.push_back(r.x[cov_index]);
      censored_.push_back(r.delta == 0);
    }
    if (y_.size() < 2) throw data_error("local KM: fewer than 2 records in arm " + std::to_string(arm));
    order_.resize(y_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) { return y_[a] < y_[b]; });
  }

  std::size_t arm_size() const { return y_.size(); }
  // Dataset indices of the arm's records, in dataset order.
  const std::vector<std::size_t>& members() const { return members_; }

  double operator()(double t, double x) const { return evaluate(t, x, false); }
  double left_limit(double t, double x) const { return evaluate(t, x, true); }

  // Ĝ(y_i | x_i) (or the left limit) for each arm record, in members() order.
  std::vector<double> at_members(bool left_limit) const {
    const std::size_t n = y_.size();
    std::vector<double> out(n);
    if (n <= options_.exact_limit || options_.grid_points < 2) {
      std::vector<double> right(n), left(n), w(n);
      for (std::size_t i = 0; i < n; ++i) {
        weights_at(x_[i], w);
        sweep(w, right, left);
        out[i] = left_limit ? left[i] : right[i];
      }
      return out;
    }
    const auto [lo_it, hi_it] = std::minmax_element(x_.begin(), x_.end());
    const double lo = *lo_it, hi = *hi_it;
    const std::size_t g = options_.grid_points;
    const double step = (hi - lo) / static_cast<double>(g - 1);
    if (!(step > 0.0)) {
      std::vector<double> right(n), left(n), w(n);
      weights_at(lo, w);
      sweep(w, right, left);
      return left_limit ? left : right;
    }
    // Bucket records by grid cell [g_k, g_{k+1}].
    std::vector<std::vector<std::size_t>> cell(g - 1);
    for (std::size_t i = 0; i < n; ++i) {
      auto k = static_cast<std::size_t>(std::floor((x_[i] - lo) / step));
      if (k >= g - 1) k = g - 2;
      cell[k].push_back(i);
    }
    std::vector<double> w(n), r0(n), l0(n), r1(n), l1(n);
    weights_at(lo, w);
    sweep(w, r0, l0);
    for (std::size_t k = 0; k + 1 < g; ++k) {
      const double xk = lo + step * static_cast<double>(k);
      const double xk1 = k + 2 == g ? hi : lo + step * static_cast<double>(k + 1);
      weights_at(xk1, w);
      sweep(w, r1, l1);
      for (std::size_t i : cell[k]) {
        const double f = std::clamp((x_[i] - xk) / (xk1 - xk), 0.0, 1.0);
        out[i] = left_limit ? (1.0 - f) * l0[i] + f * l1[i] : (1.0 - f) * r0[i] + f * r1[i];
      }
      std::swap(r0, r1);
      std::swap(l0, l1);
    }
    return out;
  }

 private:
  void weights_at(double x, std::vector<double>& w) const {
    double total = 0.0;
    for (std::size_t k = 0; k < x_.size(); ++k) {
      w[k] = kernel_((x - x_[k]) / kernel_.bandwidth);
      total += w[k];
    }
    if (!(total > 0.0)) throw estimation_error("query outside effective support; increase bandwidth");
    for (double& v : w) v /= total;
  }

  // risk[i] = sum of weights at sorted positions >= i.
  std::vector<double> suffix_sums(const std::vector<double>& w) const {
    std::vector<double> risk(order_.size() + 1, 0.0);
    for (std::size_t i = order_.size(); i-- > 0;) risk[i] = risk[i + 1] + w[order_[i]];
    return risk;
  }

  // Curve values at every arm record's own time, right-continuous and left limit.
  void sweep(const std::vector<double>& w, std::vector<double>& right, std::vector<double>& left) const {
    const std::size_t n = order_.size();
    const auto risk = suffix_sums(w);
    double s = 1.0;
    for (std::size_t i = 0; i < n;) {
      const double t = y_[order_[i]];
      std::size_t j = i;
      double cens = 0.0;
      while (j < n && y_[order_[j]] == t) {
        if (censored_[order_[j]]) cens += w[order_[j]];
        ++j;
      }
      const double before = s;
      if (cens > 0.0) s *= std::max(0.0, 1.0 - cens / risk[i]);
      for (std::size_t k = i; k < j; ++k) {
        left[order_[k]] = before;
        right[order_[k]] = s;
      }
      i = j;
    }
  }

  double evaluate(double t, double x, bool left_limit) const {
    std::vector<double> w(x_.size());
    weights_at(x, w);
    const std::size_t n = order_.size();
    const auto risk = suffix_sums(w);
    double s = 1.0;
    for (std::size_t i = 0; i < n;) {
      const double c = y_[order_[i]];
      if (left_limit ? !(c < t) : !(c <= t)) break;
      std::size_t j = i;
      double cens = 0.0;
      while (j < n && y_[order_[j]] == c) {
        if (censored_[order_[j]]) cens += w[order_[j]];
        ++j;
      }
      if (cens > 0.0) s *= std::max(0.0, 1.0 - cens / risk[i]);
      i = j;
    }
    return s;
  }

  KernelSpec kernel_;
  LocalKmOptions options_;
  int arm_;
  std::vector<std::size_t> members_;
  std::vector<double> y_, x_;
  std::vector<char> censored_;
  std::vector<std::size_t> order_;
};

}  // namespace qdr
