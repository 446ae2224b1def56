#pragma once

// Inverse-probability-weighted quantile value of a decision rule.
//
// For a rule d, subject i is a complete case when it is uncensored and its
// received treatment matches d(X_i): R_i = [A d + (1-A)(1-d)] Delta. Its
// observation probability is pi_i = [pi_A d + (1-pi_A)(1-d)] G_C(Y_i). The
// value estimate is the lower weighted tau-quantile of the complete-case Y
// with weights 1/pi_i.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "qdr/dataio.hpp"
#include "qdr/errors.hpp"
#include "qdr/rule.hpp"
#include "qdr/survival.hpp"

namespace qdr {

struct QuantileSpec {
  double tau = 0.5;
};

inline void validate_quantile(const QuantileSpec& q) {
  if (!(q.tau > 0.0 && q.tau < 1.0)) throw parameter_error("tau must lie strictly in (0,1)");
}

struct WeightedSample {
  std::vector<double> values;
  std::vector<double> weights;
};

// Check loss rho_tau(u) = u (tau - I(u < 0)).
inline double check_loss(double u, double tau) { return u * (tau - (u < 0.0 ? 1.0 : 0.0)); }

// Smallest sample value b minimizing sum w_i rho_tau(y_i - b): the first order
// statistic whose cumulative weight reaches tau * W. Ties in value are ordered
// by position so accumulation order is fixed.
inline double weighted_quantile(const WeightedSample& ws, const QuantileSpec& spec) {
  validate_quantile(spec);
  const auto& v = ws.values;
  const auto& w = ws.weights;
  if (v.size() != w.size()) throw parameter_error("weighted sample: lengths differ");
  for (double x : w)
    if (!(x >= 0.0)) throw parameter_error("weighted sample: weights must be nonnegative");
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return v[a] < v[b] || (v[a] == v[b] && a < b);
  });
  double total = 0.0;
  for (std::size_t k : order) total += w[k];
  if (!(total > 0.0)) throw estimation_error("no effective observations for this rule");
  const double target = spec.tau * total;
  double cum = 0.0;
  for (std::size_t k : order) {
    cum += w[k];
    if (cum >= target && w[k] > 0.0) return v[k];
  }
  // Rounding can leave cum a hair below target; the answer is then the last
  // positive-weight atom.
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if (w[*it] > 0.0) return v[*it];
  return v[order.back()];
}

// ---------------------------------------------------------------------------
// Censoring weights

struct WeightOptions {
  double floor = 0.01;       // lower clamp on G_C used as a denominator
  bool left_limit = false;   // use G_C(Y-) instead of G_C(Y)
};

inline void validate_weights(const WeightOptions& o) {
  if (!(o.floor > 0.0 && o.floor <= 1.0)) throw parameter_error("weight floor must lie in (0,1]");
}

// max(G_C(Y_i), floor) for every record.
template <class Dataset>
std::vector<double> censoring_probabilities(const Dataset& ds, const SurvivalCurve& gc,
                                            const WeightOptions& opts = {}) {
  validate_weights(opts);
  std::vector<double> g(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double y = ds[i].y;
    g[i] = std::max(opts.left_limit ? gc.left_limit(y) : gc(y), opts.floor);
  }
  return g;
}

// Same, with arm-specific local KM conditioning on one covariate.
inline std::vector<double> censoring_probabilities(const StaticDataset& ds, const LocalKaplanMeier& arm0,
                                                   const LocalKaplanMeier& arm1,
                                                   const WeightOptions& opts = {}) {
  validate_weights(opts);
  std::vector<double> g(ds.size(), 1.0);
  for (const auto* km : {&arm0, &arm1}) {
    const auto vals = km->at_members(opts.left_limit);
    const auto& idx = km->members();
    for (std::size_t k = 0; k < idx.size(); ++k) g[idx[k]] = std::max(vals[k], opts.floor);
  }
  return g;
}

inline double treatment_probability(int treatment, double pscore) {
  return treatment == 1 ? pscore : 1.0 - pscore;
}

inline int compliance_indicator(const StaticRecord& rec, const IndexRule& rule) {
  const int d = rule.decide(rec.x);
  return (rec.a == d ? 1 : 0) * rec.delta;
}

// pi_i = [pi_A d + (1 - pi_A)(1 - d)] * g, with g the (clamped) G_C value.
inline double observation_weight(const StaticRecord& rec, double pscore, const IndexRule& rule,
                                 double g) {
  return treatment_probability(rule.decide(rec.x), pscore) * g;
}

inline double observation_weight(const StaticDataset& ds, std::size_t i, const IndexRule& rule,
                                 const SurvivalCurve& gc, const WeightOptions& opts = {}) {
  const double y = ds[i].y;
  const double g = std::max(opts.left_limit ? gc.left_limit(y) : gc(y), opts.floor);
  return observation_weight(ds[i], ds.propensity(i), rule, g);
}

// R_i / pi_i with 0/0 = 0.
inline double ipw_summand(const StaticRecord& rec, double pscore, const IndexRule& rule, double g) {
  if (compliance_indicator(rec, rule) == 0) return 0.0;
  return 1.0 / observation_weight(rec, pscore, rule, g);
}

// Complete cases of the rule with their inverse-probability weights.
inline WeightedSample complete_case_sample(const StaticDataset& ds, const IndexRule& rule,
                                           const std::vector<double>& g) {
  rule.check_dim(ds.dim());
  WeightedSample ws;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds[i];
    if (compliance_indicator(r, rule) == 0) continue;
    ws.values.push_back(r.y);
    ws.weights.push_back(1.0 / (treatment_probability(r.a, ds.propensity(i)) * g[i]));
  }
  return ws;
}

inline double q_hat(const StaticDataset& ds, const IndexRule& rule, const std::vector<double>& g,
                    const QuantileSpec& spec) {
  return weighted_quantile(complete_case_sample(ds, rule, g), spec);
}

inline double q_hat(const StaticDataset& ds, const IndexRule& rule, const SurvivalCurve& gc,
                    const QuantileSpec& spec, const WeightOptions& opts = {}) {
  return q_hat(ds, rule, censoring_probabilities(ds, gc, opts), spec);
}

// n^{-1} sum R_i I(Y_i > v) / pi_i.
inline double g_mean(const StaticDataset& ds, const IndexRule& rule, double v,
                     const std::vector<double>& g) {
  const auto ws = complete_case_sample(ds, rule, g);
  double s = 0.0;
  for (std::size_t k = 0; k < ws.values.size(); ++k)
    if (ws.values[k] - v > 0.0) s += ws.weights[k];
  return s / static_cast<double>(ds.size());
}

inline double g_mean(const StaticDataset& ds, const IndexRule& rule, double v, const SurvivalCurve& gc,
                     const WeightOptions& opts = {}) {
  return g_mean(ds, rule, v, censoring_probabilities(ds, gc, opts));
}

// Sample-level dual characterizations of the value.
//
// duality_sup: sup{v : g_mean(v) >= (1 - tau) * g_mean(-inf)} over real v,
// i.e. the smallest sample Y at which the inequality fails. This equals q_hat
// whenever no cumulative weight lands exactly on tau * W. With
// self_normalized = false the threshold is the bare 1 - tau of the population
// identity, which in finite samples is off by the factor g_mean(-inf) = W/n.
inline double duality_sup(const StaticDataset& ds, const IndexRule& rule, const std::vector<double>& g,
                          double tau, bool self_normalized = true) {
  const double base = g_mean(ds, rule, -std::numeric_limits<double>::infinity(), g);
  const double threshold = self_normalized ? (1.0 - tau) * base : 1.0 - tau;
  std::vector<double> ys;
  for (const auto& r : ds.records()) ys.push_back(r.y);
  std::sort(ys.begin(), ys.end());
  for (double y : ys)
    if (!(g_mean(ds, rule, y, g) >= threshold)) return y;
  return std::numeric_limits<double>::infinity();
}

// Largest sample Y with g_mean(Y) >= 1 - tau (unnormalized); -inf if none.
inline double duality_max_sample(const StaticDataset& ds, const IndexRule& rule,
                                 const std::vector<double>& g, double tau) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& r : ds.records())
    if (g_mean(ds, rule, r.y, g) >= 1.0 - tau) best = std::max(best, r.y);
  return best;
}

// inf{v in sample : n^{-1} sum R_i I(Y_i <= v) / pi_i >= tau}: the quantile of
// the unnormalized IPW distribution function. Unlike q_hat it does not depend
// on weight mass above the answer.
inline double ipw_cdf_quantile(const StaticDataset& ds, const IndexRule& rule,
                               const std::vector<double>& g, const QuantileSpec& spec) {
  validate_quantile(spec);
  auto ws = complete_case_sample(ds, rule, g);
  std::vector<std::size_t> order(ws.values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ws.values[a] < ws.values[b] || (ws.values[a] == ws.values[b] && a < b);
  });
  const double n = static_cast<double>(ds.size());
  double cum = 0.0;
  for (std::size_t k : order) {
    cum += ws.weights[k];
    if (cum / n >= spec.tau) return ws.values[k];
  }
  return std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// Fast objective for search.
//
// The weight of a complete case, 1/(pi_A-term(A_i) g_i), does not depend on
// the rule, so uncensored records are sorted once by (Y, index) and each
// evaluation is two linear passes. Results are bit-identical to q_hat.

class StaticObjective {
 public:
  StaticObjective(const StaticDataset& ds, const std::vector<double>& g, QuantileSpec spec)
      : tau_(spec.tau), p_(ds.dim()) {
    validate_quantile(spec);
    if (g.size() != ds.size()) throw parameter_error("censoring probabilities: wrong length");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds[i].delta == 1) idx.push_back(i);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return ds[a].y < ds[b].y || (ds[a].y == ds[b].y && a < b);
    });
    y_.reserve(idx.size());
    w_.reserve(idx.size());
    a_.reserve(idx.size());
    x_.reserve(idx.size() * p_);
    for (std::size_t i : idx) {
      const auto& r = ds[i];
      y_.push_back(r.y);
      w_.push_back(1.0 / (treatment_probability(r.a, ds.propensity(i)) * g[i]));
      a_.push_back(static_cast<char>(r.a));
      x_.insert(x_.end(), r.x.begin(), r.x.end());
    }
  }

  std::size_t dim() const { return p_; }
  double tau() const { return tau_; }

  // Q-hat of the rule, or -inf when no record complies.
  double operator()(int sign, std::span<const double> tail) const {
    const std::size_t m = y_.size();
    thread_local std::vector<char> mask;
    mask.resize(m);
    double total = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const char d = index_value(sign, tail, &x_[k * p_]) > 0.0 ? 1 : 0;
      mask[k] = d == a_[k];
      if (mask[k]) total += w_[k];
    }
    if (!(total > 0.0)) return -std::numeric_limits<double>::infinity();
    const double target = tau_ * total;
    double cum = 0.0;
    std::size_t last = m;
    for (std::size_t k = 0; k < m; ++k) {
      if (!mask[k]) continue;
      cum += w_[k];
      last = k;
      if (cum >= target) return y_[k];
    }
    return y_[last];
  }

  double operator()(const IndexRule& rule) const {
    rule.check_dim(p_);
    return (*this)(rule.sign, rule.tail);
  }

  std::size_t compliers(const IndexRule& rule) const {
    std::size_t c = 0;
    for (std::size_t k = 0; k < y_.size(); ++k)
      c += (index_value(rule.sign, rule.tail, &x_[k * p_]) > 0.0 ? 1 : 0) == a_[k];
    return c;
  }

 private:
  double tau_;
  std::size_t p_;
  std::vector<double> y_, w_, x_;
  std::vector<char> a_;
};

}  // namespace qdr
