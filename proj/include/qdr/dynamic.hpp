#pragma once

// Two-stage dynamic regimes. A subject follows rule xi = (beta, zeta) when
// its stage-1 treatment matches I(beta . x1 > 0) and, if it reached stage 2
// (y > s), its stage-2 treatment matches I(zeta . f(h2) > 0), where h2 =
// (x1, d1, x2) and f selects a subset of h2's coordinates.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qdr/dataio.hpp"
#include "qdr/errors.hpp"
#include "qdr/policy.hpp"
#include "qdr/rng.hpp"
#include "qdr/rule.hpp"
#include "qdr/search.hpp"
#include "qdr/survival.hpp"
#include "qdr/value.hpp"

namespace qdr {

struct DynamicRule {
  IndexRule stage1;
  IndexRule stage2;
  // Indices into h2 = (x1..., d1, x2...) fed to the stage-2 index, in order;
  // the first is the sign-normalized coordinate. Empty means all of h2.
  std::vector<std::size_t> stage2_features;
};

inline std::vector<double> stage2_history(const DynamicRecord& r) {
  std::vector<double> h(r.x1);
  h.push_back(static_cast<double>(r.d1));
  h.insert(h.end(), r.x2.begin(), r.x2.end());
  return h;
}

inline std::vector<double> select_features(const std::vector<double>& h, const std::vector<std::size_t>& idx) {
  if (idx.empty()) return h;
  std::vector<double> f;
  f.reserve(idx.size());
  for (std::size_t k : idx) {
    if (k >= h.size()) throw parameter_error("stage-2 feature index out of range");
    f.push_back(h[k]);
  }
  return f;
}

inline std::size_t stage2_dim(const DynamicRule& rule, const DynamicDataset& ds) {
  return rule.stage2_features.empty() ? ds.history_dim() : rule.stage2_features.size();
}

inline void check_dynamic_rule(const DynamicRule& rule, const DynamicDataset& ds) {
  validate_rule(rule.stage1);
  validate_rule(rule.stage2);
  rule.stage1.check_dim(ds.dim1());
  for (std::size_t k : rule.stage2_features)
    if (k >= ds.history_dim()) throw parameter_error("stage-2 feature index out of range");
  rule.stage2.check_dim(stage2_dim(rule, ds));
}

inline int stage1_decision(const DynamicRecord& r, const DynamicRule& rule) { return rule.stage1.decide(r.x1); }

inline int stage2_decision(const DynamicRecord& r, const DynamicRule& rule) {
  return rule.stage2.decide(select_features(stage2_history(r), rule.stage2_features));
}

// R~ = Delta I(D1 = d1) [I(Y <= s) + I(Y > s) I(D2 = d2)].
inline int dyn_compliance(const DynamicRecord& r, const DynamicRule& rule, double s) {
  if (r.delta == 0) return 0;
  if (r.d1 != stage1_decision(r, rule)) return 0;
  if (r.y <= s) return 1;
  return r.d2 == stage2_decision(r, rule) ? 1 : 0;
}

// w~ = pi_{d1} g [I(y <= s) + pi_{d2} I(y > s)], g the clamped G_C(y).
inline double dyn_weight(const DynamicRecord& r, const DynamicRule& rule, const DynamicDataset& ds, double g) {
  const double p1 = treatment_probability(stage1_decision(r, rule), ds.pi1());
  if (r.y <= ds.s()) return p1 * g;
  return p1 * g * treatment_probability(stage2_decision(r, rule), ds.pi2());
}

inline double dyn_weight(const DynamicRecord& r, const DynamicRule& rule, const DynamicDataset& ds,
                         const SurvivalCurve& gc, const WeightOptions& opts = {}) {
  const double g = std::max(opts.left_limit ? gc.left_limit(r.y) : gc(r.y), opts.floor);
  return dyn_weight(r, rule, ds, g);
}

// Weight of a complete case depends only on the received treatments.
inline double dyn_complete_case_weight(const DynamicRecord& r, const DynamicDataset& ds, double g) {
  const double p1 = treatment_probability(r.d1, ds.pi1());
  if (r.y <= ds.s()) return 1.0 / (p1 * g);
  return 1.0 / (p1 * g * treatment_probability(r.d2, ds.pi2()));
}

inline WeightedSample dyn_complete_case_sample(const DynamicDataset& ds, const DynamicRule& rule,
                                               const std::vector<double>& g) {
  check_dynamic_rule(rule, ds);
  WeightedSample ws;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds[i];
    if (dyn_compliance(r, rule, ds.s()) == 0) continue;
    ws.values.push_back(r.y);
    ws.weights.push_back(dyn_complete_case_weight(r, ds, g[i]));
  }
  return ws;
}

inline double dyn_q_hat(const DynamicDataset& ds, const DynamicRule& rule, const std::vector<double>& g,
                        const QuantileSpec& spec) {
  return weighted_quantile(dyn_complete_case_sample(ds, rule, g), spec);
}

inline double dyn_q_hat(const DynamicDataset& ds, const DynamicRule& rule, const SurvivalCurve& gc,
                        const QuantileSpec& spec, const WeightOptions& opts = {}) {
  return dyn_q_hat(ds, rule, censoring_probabilities(ds, gc, opts), spec);
}

// n^{-1} sum R~_i I(Y_i > v) / w~_i.
inline double dyn_g_mean(const DynamicDataset& ds, const DynamicRule& rule, double v,
                         const std::vector<double>& g) {
  const auto ws = dyn_complete_case_sample(ds, rule, g);
  double s = 0.0;
  for (std::size_t k = 0; k < ws.values.size(); ++k)
    if (ws.values[k] - v > 0.0) s += ws.weights[k];
  return s / static_cast<double>(ds.size());
}

// Fast objective over (sign1, tail1, sign2, tail2); bit-identical to dyn_q_hat.
class DynamicObjective {
 public:
  DynamicObjective(const DynamicDataset& ds, const std::vector<double>& g, QuantileSpec spec,
                   std::vector<std::size_t> features)
      : tau_(spec.tau), s_(ds.s()), p1_(ds.dim1()), features_(std::move(features)) {
    validate_quantile(spec);
    if (g.size() != ds.size()) throw parameter_error("censoring probabilities: wrong length");
    for (std::size_t k : features_)
      if (k >= ds.history_dim()) throw parameter_error("stage-2 feature index out of range");
    q_ = features_.empty() ? ds.history_dim() : features_.size();
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds[i].delta == 1) idx.push_back(i);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return ds[a].y < ds[b].y || (ds[a].y == ds[b].y && a < b);
    });
    for (std::size_t i : idx) {
      const auto& r = ds[i];
      y_.push_back(r.y);
      w_.push_back(dyn_complete_case_weight(r, ds, g[i]));
      d1_.push_back(static_cast<char>(r.d1));
      x1_.insert(x1_.end(), r.x1.begin(), r.x1.end());
      const bool late = r.y > s_;
      late_.push_back(late);
      d2_.push_back(static_cast<char>(late ? r.d2 : 0));
      if (late) {
        const auto f = select_features(stage2_history(r), features_);
        h2_.insert(h2_.end(), f.begin(), f.end());
      } else {
        h2_.insert(h2_.end(), q_, 0.0);
      }
    }
  }

  std::size_t dim1() const { return p1_; }
  std::size_t dim2() const { return q_; }
  double tau() const { return tau_; }
  const std::vector<std::size_t>& features() const { return features_; }

  bool complies(std::size_t k, int sign1, std::span<const double> tail1, int sign2,
                std::span<const double> tail2) const {
    const char a = index_value(sign1, tail1, &x1_[k * p1_]) > 0.0 ? 1 : 0;
    if (a != d1_[k]) return false;
    if (!late_[k]) return true;
    const char b = index_value(sign2, tail2, &h2_[k * q_]) > 0.0 ? 1 : 0;
    return b == d2_[k];
  }

  double operator()(int sign1, std::span<const double> tail1, int sign2, std::span<const double> tail2) const {
    const std::size_t m = y_.size();
    thread_local std::vector<char> mask;
    mask.resize(m);
    double total = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      mask[k] = complies(k, sign1, tail1, sign2, tail2);
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

  double operator()(const DynamicRule& r) const { return (*this)(r.stage1.sign, r.stage1.tail, r.stage2.sign, r.stage2.tail); }

  struct Counts {
    std::size_t total = 0, stage1 = 0, stage2 = 0;
  };
  // Complete cases following the rule; stage1 = uncensored with matching D1;
  // stage2 = those of stage1 past s whose D2 also matches.
  Counts compliance_counts(const DynamicRule& r) const {
    Counts c;
    for (std::size_t k = 0; k < y_.size(); ++k) {
      const char a = index_value(r.stage1.sign, r.stage1.tail, &x1_[k * p1_]) > 0.0 ? 1 : 0;
      if (a != d1_[k]) continue;
      ++c.stage1;
      if (!late_[k]) {
        ++c.total;
        continue;
      }
      const char b = index_value(r.stage2.sign, r.stage2.tail, &h2_[k * q_]) > 0.0 ? 1 : 0;
      if (b == d2_[k]) {
        ++c.stage2;
        ++c.total;
      }
    }
    return c;
  }

 private:
  double tau_, s_;
  std::size_t p1_, q_ = 0;
  std::vector<std::size_t> features_;
  std::vector<double> y_, w_, x1_, h2_;
  std::vector<char> d1_, d2_, late_;
};

struct DynamicFitOptions {
  WeightOptions weights;
  std::optional<double> cutoff;
  bool naive = false;  // G_C = 1, all observations treated as events
  std::vector<std::size_t> stage2_features;
};

struct DynamicFitReport {
  DynamicRule rule;
  double value = 0.0;
  std::vector<double> objective_trace;
  std::size_t n_effective = 0;
  std::size_t stage1_compliers = 0;
  std::size_t stage2_compliers = 0;
  double censoring_rate = 0.0;
  std::size_t evaluations = 0;
  std::size_t n = 0;
  double tau = 0.5;
};

struct PreparedDynamic {
  DynamicDataset data;
  std::vector<double> g;
};

inline PreparedDynamic prepare_dynamic(const DynamicDataset& ds, const DynamicFitOptions& opts) {
  validate_weights(opts.weights);
  DynamicDataset data = opts.cutoff ? apply_artificial_censoring(ds, *opts.cutoff) : ds;
  if (opts.naive) {
    std::vector<DynamicRecord> recs = data.records();
    for (auto& r : recs) r.delta = 1;
    DynamicDataset all(std::move(recs), data.s(), data.pi1(), data.pi2(), data.options());
    std::vector<double> g(all.size(), 1.0);
    return {std::move(all), std::move(g)};
  }
  auto g = censoring_probabilities(data, km_censoring(data), opts.weights);
  return {std::move(data), std::move(g)};
}

inline DynamicFitReport search_dynamic(const DynamicObjective& obj, const SearchConfig& cfg_in) {
  const std::size_t d1 = obj.dim1() - 1, d2 = obj.dim2() - 1;
  const SearchConfig cfg = with_default_box(cfg_in, d1 + d2);
  validate_search_config(cfg, d1 + d2);

  DynamicFitReport rep;
  rep.tau = obj.tau();
  double best = -std::numeric_limits<double>::infinity();
  std::optional<std::pair<std::vector<double>, std::pair<int, int>>> best_pt;
  // Sign pairs in lexicographic order; ties keep the first (smallest) pair.
  const std::pair<int, int> pairs[] = {{-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
  for (std::size_t pi = 0; pi < 4; ++pi) {
    const auto [s1, s2] = pairs[pi];
    for (int r = 0; r < cfg.restarts; ++r) {
      Rng rng(derive_seed(cfg.seed, pi, static_cast<std::uint64_t>(r)));
      const auto res = evolve(
          [&](std::span<const double> t) { return obj(s1, t.subspan(0, d1), s2, t.subspan(d1)); }, cfg, rng);
      rep.evaluations += res.evaluations;
      for (double v : res.trace) {
        const double running = rep.objective_trace.empty() ? v : std::max(rep.objective_trace.back(), v);
        rep.objective_trace.push_back(running);
      }
      bool take = !best_pt || res.value > best;
      if (!take && res.value == best && best_pt->second == pairs[pi])
        take = std::lexicographical_compare(res.best.begin(), res.best.end(), best_pt->first.begin(),
                                            best_pt->first.end());
      if (take) {
        best = res.value;
        best_pt = {res.best, pairs[pi]};
      }
    }
  }
  if (!(best > -std::numeric_limits<double>::infinity()))
    throw estimation_error("no rule in the search box complies with any observation");
  const auto& t = best_pt->first;
  rep.rule.stage1 = IndexRule{best_pt->second.first, std::vector<double>(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(d1))};
  rep.rule.stage2 = IndexRule{best_pt->second.second, std::vector<double>(t.begin() + static_cast<std::ptrdiff_t>(d1), t.end())};
  rep.rule.stage2_features = obj.features();
  rep.value = obj(rep.rule);
  const auto c = obj.compliance_counts(rep.rule);
  rep.n_effective = c.total;
  rep.stage1_compliers = c.stage1;
  rep.stage2_compliers = c.stage2;
  return rep;
}

inline DynamicFitReport fit_dynamic_prepared(const PreparedDynamic& prep, const QuantileSpec& spec,
                                             const SearchConfig& cfg, const std::vector<std::size_t>& features) {
  const DynamicObjective obj(prep.data, prep.g, spec, features);
  auto rep = search_dynamic(obj, cfg);
  rep.n = prep.data.size();
  rep.censoring_rate = prep.data.censoring_rate();
  return rep;
}

inline DynamicFitReport fit_dynamic(const DynamicDataset& ds, const QuantileSpec& spec, const SearchConfig& cfg,
                                    const DynamicFitOptions& opts = {}) {
  validate_quantile(spec);
  return fit_dynamic_prepared(prepare_dynamic(ds, opts), spec, cfg, opts.stage2_features);
}

}  // namespace qdr
