#pragma once

// Resampling inference for the tail coefficients of the static rule.
//
// Smoothed estimator: with the plug-in value v = V-hat and the sign fixed at
// the prior fit's sign, maximize
//     S_h(beta) = n^{-1} sum xi_i c_i Delta_i I(Y_i > v) / G_i * Phi(beta . X_i / h),
// c_i = A_i / (2 pi_i) - (1 - A_i) / (2 (1 - pi_i))  (= 2A_i - 1 at pi = 1/2),
// xi_i = 1 for the point estimate and i.i.d. mean-1 variance-1 positive weights
// for perturbation replicates. CI for coefficient j:
//     [b_j - eta_j(1 - alpha/2) / sqrt(n h), b_j - eta_j(alpha/2) / sqrt(n h)],
// eta the bootstrap quantiles of sqrt(n h) (b*_j - b_j).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qdr/dataio.hpp"
#include "qdr/errors.hpp"
#include "qdr/parallel.hpp"
#include "qdr/policy.hpp"
#include "qdr/rng.hpp"
#include "qdr/rule.hpp"
#include "qdr/search.hpp"
#include "qdr/value.hpp"

namespace qdr {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

enum class WeightLaw {
  exponential,  // Exp(1)
  two_point,    // 0.5 w.p. 0.8, 3 w.p. 0.2: mean 1, variance 1
  unit,         // all ones (diagnostic: replicates reproduce the point estimate)
};

inline double draw_weight(WeightLaw law, Rng& rng) {
  switch (law) {
    case WeightLaw::exponential: return rng.exponential(1.0);
    case WeightLaw::two_point: return rng.uniform() < 0.8 ? 0.5 : 3.0;
    case WeightLaw::unit: return 1.0;
  }
  return 1.0;
}

class SmoothedObjective {
 public:
  // xi empty means unit weights; otherwise one weight per record.
  SmoothedObjective(const StaticDataset& ds, const std::vector<double>& g, double v, double h,
                    const std::vector<double>& xi = {}, const std::vector<std::size_t>& subset = {})
      : h_(h), p_(ds.dim()) {
    if (!(h > 0.0)) throw parameter_error("bandwidth must be positive");
    auto add = [&](std::size_t i) {
      const auto& r = ds[i];
      ++n_;
      if (r.delta == 0 || !(r.y > v)) return;
      const double pi = ds.propensity(i);
      const double c = r.a == 1 ? 1.0 / (2.0 * pi) : -1.0 / (2.0 * (1.0 - pi));
      const double wt = xi.empty() ? 1.0 : xi[i];
      coef_.push_back(wt * c / g[i]);
      x_.insert(x_.end(), r.x.begin(), r.x.end());
    };
    if (subset.empty()) {
      for (std::size_t i = 0; i < ds.size(); ++i) add(i);
    } else {
      for (std::size_t i : subset) add(i);
    }
  }

  double operator()(int sign, std::span<const double> tail) const {
    double s = 0.0;
    for (std::size_t k = 0; k < coef_.size(); ++k)
      s += coef_[k] * normal_cdf(index_value(sign, tail, &x_[k * p_]) / h_);
    return s / static_cast<double>(n_);
  }

  // The same sum with Phi(./h) replaced by the indicator I(. > 0).
  double indicator(int sign, std::span<const double> tail) const {
    double s = 0.0;
    for (std::size_t k = 0; k < coef_.size(); ++k)
      if (index_value(sign, tail, &x_[k * p_]) > 0.0) s += coef_[k];
    return s / static_cast<double>(n_);
  }

  // Sum of |terms|: the scale against which flatness is judged.
  double scale() const {
    double s = 0.0;
    for (double c : coef_) s += std::abs(c);
    return s / static_cast<double>(n_);
  }

 private:
  double h_;
  std::size_t p_;
  std::size_t n_ = 0;
  std::vector<double> coef_, x_;
};

inline double smoothed_objective(const StaticDataset& ds, int sign, std::span<const double> tail, double v,
                                 const std::vector<double>& g, double h) {
  return SmoothedObjective(ds, g, v, h)(sign, tail);
}

// Held-out CV score: the smoothed loss at the candidate h (literal), or its
// h -> 0 indicator limit, which is comparable across bandwidths.
enum class CvLoss { smoothed, indicator };

// pivot: [b - q(1 - a/2), b - q(a/2)] from quantiles q of (b* - b) (the stated
// form). percentile: [q*(a/2), q*(1 - a/2)] of the replicates themselves, which
// keeps the skew of the bootstrap distribution on its own side.
enum class CiMethod { pivot, percentile };

struct SmoothConfig {
  std::optional<double> bandwidth;  // unset: cross-validate over cv_grid
  std::vector<double> cv_grid;      // empty: {0.5,1,2,4} n^{-1/5} SD(beta-hat . X)
  int folds = 5;
  CvLoss cv_loss = CvLoss::smoothed;
  CiMethod interval = CiMethod::pivot;
  int bootstrap_reps = 200;
  WeightLaw weight_law = WeightLaw::exponential;
  double alpha = 0.10;
  std::uint64_t seed = 20240601;
  unsigned threads = 1;
  SearchConfig search;  // box and GA settings for the point estimate
  PolishConfig polish;
};

inline std::vector<std::string> smooth_config_problems(const SmoothConfig& c) {
  std::vector<std::string> p;
  if (c.bandwidth && !(*c.bandwidth > 0.0)) p.push_back("bandwidth must be positive");
  for (double h : c.cv_grid)
    if (!(h > 0.0)) p.push_back("cv_grid entries must be positive");
  if (c.folds < 2) p.push_back("folds must be >= 2");
  if (c.bootstrap_reps < 1) p.push_back("bootstrap_reps must be >= 1");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) p.push_back("alpha must lie strictly in (0,1)");
  return p;
}

// Type-7 (linear interpolation) sample quantile of sorted data.
inline double sorted_quantile(const std::vector<double>& sorted, double prob) {
  if (sorted.empty()) throw estimation_error("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

inline std::vector<double> default_bandwidth_grid(const StaticDataset& ds, const IndexRule& rule) {
  const std::size_t n = ds.size();
  double mean = 0.0;
  std::vector<double> idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    idx[i] = index_value(rule.sign, rule.tail, ds[i].x.data());
    mean += idx[i];
  }
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : idx) ss += (v - mean) * (v - mean);
  double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  if (!(sd > 0.0)) sd = 1.0;
  const double base = std::pow(static_cast<double>(n), -0.2) * sd;
  return {0.5 * base, base, 2.0 * base, 4.0 * base};
}

struct SmoothFit {
  IndexRule rule;
  double bandwidth = 0.0;
  double objective = 0.0;
  bool degenerate = false;  // objective numerically flat over the box
  std::vector<double> cv_grid;
  std::vector<double> cv_scores;  // held-out negative smoothed objective, summed over folds
};

namespace detail {

inline PolishResult polish_tail(const SmoothedObjective& obj, int sign, const std::vector<double>& start,
                                const SearchConfig& box, const PolishConfig& pc) {
  return polish([&](std::span<const double> t) { return obj(sign, t); }, start, box.lower, box.upper, pc);
}

inline bool is_flat(const SmoothedObjective& obj, int sign, const std::vector<double>& at, const SearchConfig& box) {
  const double f0 = obj(sign, at);
  const double tol = 1e-8 * std::max(obj.scale(), 1e-300);
  std::vector<std::vector<double>> probes{box.lower, box.upper};
  std::vector<double> mid(box.lower.size());
  for (std::size_t j = 0; j < mid.size(); ++j) mid[j] = 0.5 * (box.lower[j] + box.upper[j]);
  probes.push_back(mid);
  for (std::size_t j = 0; j < mid.size(); ++j) {
    auto a = mid, b = mid;
    a[j] = box.lower[j];
    b[j] = box.upper[j];
    probes.push_back(a);
    probes.push_back(b);
  }
  for (const auto& p : probes)
    if (std::abs(obj(sign, p) - f0) > tol) return false;
  return true;
}

}  // namespace detail

// Five-fold (cfg.folds) CV: for each h, fit on the training folds by polishing
// from the prior estimate, score the held-out folds by the negative smoothed
// objective at the same h (or its indicator limit, per cfg.cv_loss). Smallest
// total wins; ties go to the smaller h.
inline std::pair<double, std::vector<double>> select_bandwidth(const PreparedStatic& prep, const PolicyFitReport& prior,
                                                               const std::vector<double>& grid, const SmoothConfig& cfg,
                                                               const SearchConfig& box) {
  const auto& ds = prep.data;
  const std::size_t n = ds.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(cfg.seed, 0xC5));
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.below(i))]);
  const auto K = static_cast<std::size_t>(cfg.folds);
  std::vector<std::vector<std::size_t>> train(K), test(K);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t f = k % K;
    for (std::size_t j = 0; j < K; ++j) (j == f ? test[j] : train[j]).push_back(perm[k]);
  }
  for (auto& v : train) std::sort(v.begin(), v.end());
  for (auto& v : test) std::sort(v.begin(), v.end());

  std::vector<double> scores(grid.size(), 0.0);
  parallel_for(grid.size(), cfg.threads, [&](std::size_t gi) {
    const double h = grid[gi];
    double total = 0.0;
    for (std::size_t f = 0; f < K; ++f) {
      const SmoothedObjective tr(ds, prep.g, prior.value, h, {}, train[f]);
      const auto fit = detail::polish_tail(tr, prior.rule.sign, prior.rule.tail, box, cfg.polish);
      const SmoothedObjective te(ds, prep.g, prior.value, h, {}, test[f]);
      total += cfg.cv_loss == CvLoss::smoothed ? -te(prior.rule.sign, fit.point)
                                               : -te.indicator(prior.rule.sign, fit.point);
    }
    scores[gi] = total;
  });
  std::size_t best = 0;
  for (std::size_t gi = 1; gi < grid.size(); ++gi)
    if (scores[gi] < scores[best] || (scores[gi] == scores[best] && grid[gi] < grid[best])) best = gi;
  return {grid[best], scores};
}

inline SmoothFit fit_smoothed(const PreparedStatic& prep, const PolicyFitReport& prior, const SmoothConfig& cfg) {
  const auto probs = smooth_config_problems(cfg);
  if (!probs.empty()) throw parameter_error(probs.front());
  const SearchConfig box = with_default_box(cfg.search, prior.rule.tail.size());
  validate_search_config(box, prior.rule.tail.size());

  SmoothFit out;
  if (cfg.bandwidth) {
    out.bandwidth = *cfg.bandwidth;
  } else {
    out.cv_grid = cfg.cv_grid.empty() ? default_bandwidth_grid(prep.data, prior.rule) : cfg.cv_grid;
    auto [h, scores] = select_bandwidth(prep, prior, out.cv_grid, cfg, box);
    out.bandwidth = h;
    out.cv_scores = std::move(scores);
  }
  const int sign = prior.rule.sign;
  const SmoothedObjective obj(prep.data, prep.g, prior.value, out.bandwidth);
  SearchConfig ga = box;
  ga.seed = derive_seed(cfg.seed, 0x5A);
  Rng rng(ga.seed);
  const auto res = evolve([&](std::span<const double> t) { return obj(sign, t); }, ga, rng);
  std::vector<double> start = res.best;
  if (obj(sign, prior.rule.tail) > res.value) start = prior.rule.tail;
  const auto pol = detail::polish_tail(obj, sign, start, box, cfg.polish);
  out.rule = IndexRule{sign, pol.point};
  out.objective = pol.value;
  out.degenerate = detail::is_flat(obj, sign, pol.point, box);
  return out;
}

struct CoefficientInterval {
  double lo = 0.0;
  double hi = 0.0;
};

struct InferenceReport {
  std::string method;  // "smoothed" or "m-out-of-n"
  std::string interval = "pivot";
  IndexRule beta_bar;
  double bandwidth_used = 0.0;
  std::vector<CoefficientInterval> ci;  // tail coefficients 2..p
  int replicates_requested = 0;
  int replicates_used = 0;
  int replicates_dropped = 0;
  double v_hat_plugged = 0.0;
  double alpha = 0.1;
  std::size_t m = 0;  // m-out-of-n subsample size
  bool degenerate_objective = false;
  std::vector<double> cv_grid, cv_scores;
  std::vector<std::vector<double>> replicates;  // per replicate tail estimates (sorted by replicate index)
  std::vector<std::string> warnings;
};

inline std::vector<CoefficientInterval> pivot_intervals(const std::vector<double>& center,
                                                        const std::vector<std::vector<double>>& reps,
                                                        double root_rate, double alpha) {
  std::vector<CoefficientInterval> ci(center.size());
  for (std::size_t j = 0; j < center.size(); ++j) {
    std::vector<double> eta;
    eta.reserve(reps.size());
    for (const auto& r : reps) eta.push_back(root_rate * (r[j] - center[j]));
    std::sort(eta.begin(), eta.end());
    ci[j].lo = center[j] - sorted_quantile(eta, 1.0 - alpha / 2.0) / root_rate;
    ci[j].hi = center[j] - sorted_quantile(eta, alpha / 2.0) / root_rate;
  }
  return ci;
}

inline std::vector<CoefficientInterval> percentile_intervals(const std::vector<std::vector<double>>& reps,
                                                             std::size_t k, double alpha) {
  std::vector<CoefficientInterval> ci(k);
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> v;
    v.reserve(reps.size());
    for (const auto& r : reps) v.push_back(r[j]);
    std::sort(v.begin(), v.end());
    ci[j].lo = sorted_quantile(v, alpha / 2.0);
    ci[j].hi = sorted_quantile(v, 1.0 - alpha / 2.0);
  }
  return ci;
}

inline InferenceReport perturb_bootstrap(const PreparedStatic& prep, const PolicyFitReport& prior,
                                         const SmoothFit& point, const SmoothConfig& cfg) {
  const SearchConfig box = with_default_box(cfg.search, prior.rule.tail.size());
  const std::size_t n = prep.data.size();
  const int B = cfg.bootstrap_reps;
  InferenceReport rep;
  rep.method = "smoothed";
  rep.beta_bar = point.rule;
  rep.bandwidth_used = point.bandwidth;
  rep.v_hat_plugged = prior.value;
  rep.alpha = cfg.alpha;
  rep.replicates_requested = B;
  rep.degenerate_objective = point.degenerate;
  rep.cv_grid = point.cv_grid;
  rep.cv_scores = point.cv_scores;
  if (B < 20) rep.warnings.push_back("fewer than 20 bootstrap replicates");
  if (point.degenerate) rep.warnings.push_back("smoothed objective is flat over the box; estimate is arbitrary");

  std::vector<std::optional<std::vector<double>>> out(static_cast<std::size_t>(B));
  parallel_for(static_cast<std::size_t>(B), cfg.threads, [&](std::size_t b) {
    Rng rng(derive_seed(cfg.seed, 0xB0, b));
    std::vector<double> xi(n);
    for (auto& w : xi) w = draw_weight(cfg.weight_law, rng);
    const SmoothedObjective obj(prep.data, prep.g, prior.value, point.bandwidth, xi);
    const auto pol = detail::polish_tail(obj, point.rule.sign, point.rule.tail, box, cfg.polish);
    if (pol.converged) out[b] = pol.point;
  });
  for (auto& o : out) {
    if (o) rep.replicates.push_back(std::move(*o));
    else ++rep.replicates_dropped;
  }
  rep.replicates_used = static_cast<int>(rep.replicates.size());
  if (rep.replicates.empty()) throw estimation_error("every bootstrap replicate failed to converge");
  rep.ci = cfg.interval == CiMethod::pivot
               ? pivot_intervals(point.rule.tail, rep.replicates,
                                 std::sqrt(static_cast<double>(n) * point.bandwidth), cfg.alpha)
               : percentile_intervals(rep.replicates, point.rule.tail.size(), cfg.alpha);
  rep.interval = cfg.interval == CiMethod::pivot ? "pivot" : "percentile";
  for (std::size_t j = 0; j < rep.ci.size(); ++j)
    if (!(rep.ci[j].lo <= point.rule.tail[j] && point.rule.tail[j] <= rep.ci[j].hi))
      rep.warnings.push_back("interval for coefficient " + std::to_string(j + 2) +
                             " does not contain the point estimate");
  return rep;
}

inline std::size_t default_subsample_size(std::size_t n) {
  return static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(n), 2.0 / 3.0)));
}

// B subsamples of size m with replacement, refit, percentile intervals of
// m^{1/3} (b*_j - b_j) rescaled by n^{-1/3}. Replicates whose fitted sign
// differs from the full-data sign, or whose fit fails, are dropped.
inline InferenceReport m_out_of_n_bootstrap(const StaticDataset& ds, const QuantileSpec& spec,
                                            const PolicyFitReport& prior, const SearchConfig& search,
                                            const FitOptions& opts, std::size_t m, int B, double alpha,
                                            std::uint64_t seed, unsigned threads = 1) {
  const std::size_t n = ds.size();
  if (m <= 1) throw parameter_error("m must exceed 1");
  if (m > n) throw parameter_error("m must not exceed n");
  if (B < 1) throw parameter_error("bootstrap replicates must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw parameter_error("alpha must lie strictly in (0,1)");
  InferenceReport rep;
  rep.method = "m-out-of-n";
  rep.beta_bar = prior.rule;
  rep.v_hat_plugged = prior.value;
  rep.alpha = alpha;
  rep.m = m;
  rep.replicates_requested = B;
  if (m == n) rep.warnings.push_back("m = n: plain nonparametric bootstrap, generally inconsistent here");
  if (B < 20) rep.warnings.push_back("fewer than 20 bootstrap replicates");

  std::vector<std::optional<std::vector<double>>> out(static_cast<std::size_t>(B));
  parallel_for(static_cast<std::size_t>(B), threads, [&](std::size_t b) {
    Rng rng(derive_seed(seed, 0xB1, b));
    std::vector<StaticRecord> sub;
    sub.reserve(m);
    for (std::size_t k = 0; k < m; ++k) {
      const auto i = static_cast<std::size_t>(rng.below(n));
      sub.push_back(ds[i]);
      if (!sub.back().pscore) sub.back().pscore = ds.propensity(i);
    }
    try {
      const StaticDataset sds(std::move(sub), ds.default_pscore(), ds.options());
      SearchConfig sc = search;
      sc.seed = derive_seed(seed, 0xB2, b);
      sc.threads = 1;
      const auto fit = fit_static(sds, spec, sc, opts);
      if (fit.rule.sign == prior.rule.sign) out[b] = fit.rule.tail;
    } catch (const std::runtime_error&) {
      // degenerate subsample (e.g. no events): dropped
    }
  });
  for (auto& o : out) {
    if (o) rep.replicates.push_back(std::move(*o));
    else ++rep.replicates_dropped;
  }
  rep.replicates_used = static_cast<int>(rep.replicates.size());
  if (rep.replicates.empty()) throw estimation_error("every m-out-of-n replicate failed");
  // Percentiles of m^{1/3}(b* - b) rescaled by n^{-1/3}: same pivot form with
  // the subsample rate in the spread and the full-sample rate in the rescale.
  const double rm = std::cbrt(static_cast<double>(m));
  const double rn = std::cbrt(static_cast<double>(n));
  rep.ci.resize(prior.rule.tail.size());
  for (std::size_t j = 0; j < rep.ci.size(); ++j) {
    std::vector<double> eta;
    for (const auto& r : rep.replicates) eta.push_back(rm * (r[j] - prior.rule.tail[j]));
    std::sort(eta.begin(), eta.end());
    rep.ci[j].lo = prior.rule.tail[j] - sorted_quantile(eta, 1.0 - alpha / 2.0) / rn;
    rep.ci[j].hi = prior.rule.tail[j] - sorted_quantile(eta, alpha / 2.0) / rn;
  }
  return rep;
}

}  // namespace qdr
