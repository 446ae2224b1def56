#pragma once

// Policy search for the quantile-optimal static index rule.

#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qdr/dataio.hpp"
#include "qdr/errors.hpp"
#include "qdr/rng.hpp"
#include "qdr/rule.hpp"
#include "qdr/search.hpp"
#include "qdr/survival.hpp"
#include "qdr/value.hpp"

namespace qdr {

enum class CensoringModel {
  km,        // marginal Kaplan-Meier of the censoring time
  local_km,  // arm-wise kernel-weighted KM conditioning on one covariate
  naive,     // ignore censoring: G_C = 1 and every observation treated as an event
};

struct FitOptions {
  CensoringModel censoring = CensoringModel::km;
  WeightOptions weights;
  std::optional<double> cutoff;  // artificial-censoring cutoff M
  // local_km only
  std::size_t local_covariate = 0;
  KernelSpec kernel;
  LocalKmOptions local;
};

// Dataset after the optional cutoff / naive transform, with the per-record
// censoring probabilities used as IPW denominators.
struct PreparedStatic {
  StaticDataset data;
  std::vector<double> g;
  std::optional<SurvivalCurve> curve;  // set for the km model
};

inline PreparedStatic prepare_static(const StaticDataset& ds, const FitOptions& opts) {
  validate_weights(opts.weights);
  StaticDataset data = opts.cutoff ? apply_artificial_censoring(ds, *opts.cutoff) : ds;
  switch (opts.censoring) {
    case CensoringModel::km: {
      auto curve = km_censoring(data);
      auto g = censoring_probabilities(data, curve, opts.weights);
      return {std::move(data), std::move(g), std::move(curve)};
    }
    case CensoringModel::local_km: {
      const LocalKaplanMeier arm0(data, 0, opts.local_covariate, opts.kernel, opts.local);
      const LocalKaplanMeier arm1(data, 1, opts.local_covariate, opts.kernel, opts.local);
      auto g = censoring_probabilities(data, arm0, arm1, opts.weights);
      return {std::move(data), std::move(g), std::nullopt};
    }
    case CensoringModel::naive: {
      std::vector<StaticRecord> recs = data.records();
      for (auto& r : recs) r.delta = 1;
      StaticDataset all_events(std::move(recs), data.default_pscore(), data.options());
      std::vector<double> g(all_events.size(), 1.0);
      return {std::move(all_events), std::move(g), std::nullopt};
    }
  }
  throw parameter_error("unknown censoring model");
}

struct PolicyFitReport {
  IndexRule rule;
  double value = 0.0;
  std::vector<double> objective_trace;
  std::size_t n_effective = 0;
  double censoring_rate = 0.0;
  std::size_t evaluations = 0;
  std::size_t n = 0;
  double tau = 0.5;
};

inline SearchConfig with_default_box(SearchConfig cfg, std::size_t dim) {
  if (cfg.lower.empty() && cfg.upper.empty()) {
    cfg.lower.assign(dim, -10.0);
    cfg.upper.assign(dim, 10.0);
  }
  return cfg;
}

// Rule ordering for ties: smaller sign first, then lexicographically smaller tail.
inline bool better_rule(double va, int sa, const std::vector<double>& ta, double vb, int sb,
                        const std::vector<double>& tb) {
  if (va != vb) return va > vb;
  if (sa != sb) return sa < sb;
  return std::lexicographical_compare(ta.begin(), ta.end(), tb.begin(), tb.end());
}

// Searches both signs with the given objective over the free coefficients.
inline PolicyFitReport search_static(const StaticObjective& obj, const SearchConfig& cfg_in) {
  const std::size_t dim = obj.dim() - 1;
  const SearchConfig cfg = with_default_box(cfg_in, dim);
  validate_search_config(cfg, dim);

  PolicyFitReport rep;
  rep.tau = obj.tau();
  double best = -std::numeric_limits<double>::infinity();
  std::optional<IndexRule> best_rule;
  int sign_index = 0;
  for (int sign : {-1, 1}) {
    for (int r = 0; r < cfg.restarts; ++r) {
      Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(sign_index), static_cast<std::uint64_t>(r)));
      const auto res = evolve([&](std::span<const double> t) { return obj(sign, t); }, cfg, rng);
      rep.evaluations += res.evaluations;
      for (double v : res.trace) {
        const double running = rep.objective_trace.empty() ? v : std::max(rep.objective_trace.back(), v);
        rep.objective_trace.push_back(running);
      }
      if (!best_rule || better_rule(res.value, sign, res.best, best, best_rule->sign, best_rule->tail)) {
        best = res.value;
        best_rule = IndexRule{sign, res.best};
      }
    }
    ++sign_index;
  }
  if (!(best > -std::numeric_limits<double>::infinity()))
    throw estimation_error("no rule in the search box complies with any observation");
  rep.rule = *best_rule;
  rep.value = obj(rep.rule);
  rep.n_effective = obj.compliers(rep.rule);
  return rep;
}

inline PolicyFitReport fit_prepared(const PreparedStatic& prep, const QuantileSpec& spec,
                                    const SearchConfig& cfg) {
  const StaticObjective obj(prep.data, prep.g, spec);
  auto rep = search_static(obj, cfg);
  rep.n = prep.data.size();
  rep.censoring_rate = prep.data.censoring_rate();
  return rep;
}

inline PolicyFitReport fit_static(const StaticDataset& ds, const QuantileSpec& spec, const SearchConfig& cfg,
                                  const FitOptions& opts = {}) {
  validate_quantile(spec);
  return fit_prepared(prepare_static(ds, opts), spec, cfg);
}

inline double v_hat(const PolicyFitReport& report) { return report.value; }

}  // namespace qdr
