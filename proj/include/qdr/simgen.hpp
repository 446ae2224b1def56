#pragma once

// Simulation designs with retained potential outcomes, a brute-force
// population-truth oracle, and Monte Carlo drivers.
//
// ex1   X1 ~ U(0,1); T*(0) = Weibull(1,1) + 1; T*(1) = Weibull(3, 0.5 + X1) + 2 X1;
//       A ~ Bern(0.5); C has density 0.22 on (0,2) and 0.07 on [2,10).
//       Covariates x = (X1, 1).
// ex2   x = (X1, 1, X2), X1, X2 ~ U(0,1); A ~ Bern(0.5); eps ~ N(0, 0.5^2),
//       T*(a) = 1 + X1 + X2 + a(3 - 3X1 - 1.5X2) + [0.5 + a(1 + X1 + X2)] eps;
//       C = 4 + (2 - X1) w if A = 0, 2 + I(X1 < .5 or X2 < .5) + w if A = 1,
//       w ~ N(0,1). Times can be nonpositive.
// ex3*  two stages split at s = 1. X1 ~ U(0,4), D1 ~ Bern(.5),
//       T1 ~ Exp(lambda1(X1, D1)), C ~ U(0, C0). Past s: X2 = 0.5 X1 -
//       0.4(D1 - .5) + e, e ~ U(0,2), D2 ~ Bern(.5), T2 ~ Exp(lambda2(...)),
//       T = s + T2. Stage-1 covariates x1 = (X1, 1), stage-2 x2 = (X2).
//
// Draw order per record is fixed and every latent is drawn whether or not it
// is realized, so a record's stream position does not depend on outcomes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "qdr/dataio.hpp"
#include "qdr/dynamic.hpp"
#include "qdr/errors.hpp"
#include "qdr/inference.hpp"
#include "qdr/parallel.hpp"
#include "qdr/policy.hpp"
#include "qdr/rng.hpp"
#include "qdr/rule.hpp"
#include "qdr/value.hpp"

namespace qdr {

enum class Example { ex1, ex2, ex3a, ex3b, ex3c };

inline std::string to_string(Example e) {
  switch (e) {
    case Example::ex1: return "ex1";
    case Example::ex2: return "ex2";
    case Example::ex3a: return "ex3a";
    case Example::ex3b: return "ex3b";
    case Example::ex3c: return "ex3c";
  }
  return "?";
}

inline Example parse_example(const std::string& s) {
  if (s == "ex1") return Example::ex1;
  if (s == "ex2") return Example::ex2;
  if (s == "ex3a") return Example::ex3a;
  if (s == "ex3b") return Example::ex3b;
  if (s == "ex3c") return Example::ex3c;
  throw parameter_error("unknown example '" + s + "' (expected ex1, ex2, ex3a, ex3b, ex3c)");
}

inline bool is_dynamic(Example e) { return e == Example::ex3a || e == Example::ex3b || e == Example::ex3c; }

constexpr double kStageSplit = 1.0;

// ---------------------------------------------------------------------------
// Per-record draws

struct StaticDraw {
  std::vector<double> x;
  int a = 0;
  double t0 = 0.0, t1 = 0.0, c = 0.0;
};

inline StaticDraw draw_ex1(Rng& rng) {
  StaticDraw d;
  const double x1 = rng.uniform();
  d.x = {x1, 1.0};
  d.t0 = rng.weibull(1.0, 1.0) + 1.0;
  d.t1 = rng.weibull(3.0, 0.5 + x1) + 2.0 * x1;
  d.a = rng.bernoulli(0.5) ? 1 : 0;
  d.c = rng.uniform() < 0.44 ? rng.uniform(0.0, 2.0) : rng.uniform(2.0, 10.0);
  return d;
}

inline StaticDraw draw_ex2(Rng& rng) {
  StaticDraw d;
  const double x1 = rng.uniform();
  const double x2 = rng.uniform();
  d.x = {x1, 1.0, x2};
  d.a = rng.bernoulli(0.5) ? 1 : 0;
  const double eps = rng.normal(0.0, 0.5);
  const double w = rng.normal(0.0, 1.0);
  d.t0 = 1.0 + x1 + x2 + 0.5 * eps;
  d.t1 = 1.0 + x1 + x2 + (3.0 - 3.0 * x1 - 1.5 * x2) + (0.5 + (1.0 + x1 + x2)) * eps;
  d.c = d.a == 0 ? 4.0 + (2.0 - x1) * w : 2.0 + ((x1 < 0.5 || x2 < 0.5) ? 1.0 : 0.0) + w;
  return d;
}

inline double ex3_lambda1(Example e, double x1, int d1) {
  switch (e) {
    case Example::ex3a: return 0.5 * std::exp(1.75 * (d1 - 0.5) * (x1 - 2.0));
    case Example::ex3b: return 0.2 * std::exp(2.0 * (d1 - 0.5) * (-x1 + 2.0));
    case Example::ex3c: return 0.3 * std::exp(3.0 * (d1 - 0.3) * (x1 - 3.0));
    default: throw parameter_error("not a two-stage example");
  }
}

inline double ex3_lambda2(Example e, double x1, int d1, double x2, int d2) {
  switch (e) {
    case Example::ex3a: return 0.3 * std::exp(2.5 * (d2 - 0.4) * (x2 - 2.0) - d1 * (x1 - 2.0));
    case Example::ex3b: return 0.2 * std::exp(1.5 * (d2 - 0.5) * (x2 - 2.0) + 0.3 * x1 + 0.3 * x2);
    case Example::ex3c: return 0.3 * std::exp(2.0 * (d2 - 0.5) * (x2 - 2.0) - 0.5 * (d1 - 0.3) * (x1 - 3.0));
    default: throw parameter_error("not a two-stage example");
  }
}

struct DynamicDraw {
  double x1 = 0.0;
  int d1 = 0, d2 = 0;
  std::array<double, 2> t1{};                 // stage-1 time under d1 = 0, 1
  std::array<double, 2> x2{};                 // stage-2 covariate under d1 = 0, 1
  std::array<std::array<double, 2>, 2> t2{};  // residual time past s under (d1, d2)
  double c = 0.0;

  // Potential time under the treatment sequence (a, b).
  double potential(int a, int b) const {
    return t1[a] <= kStageSplit ? t1[a] : kStageSplit + t2[a][b];
  }
};

inline DynamicDraw draw_ex3(Example e, double c0, Rng& rng) {
  DynamicDraw d;
  d.x1 = rng.uniform(0.0, 4.0);
  d.d1 = rng.bernoulli(0.5) ? 1 : 0;
  for (int a = 0; a < 2; ++a) d.t1[a] = rng.exponential(ex3_lambda1(e, d.x1, a));
  d.c = rng.uniform(0.0, c0);
  const double eps = rng.uniform(0.0, 2.0);
  for (int a = 0; a < 2; ++a) d.x2[a] = 0.5 * d.x1 - 0.4 * (a - 0.5) + eps;
  d.d2 = rng.bernoulli(0.5) ? 1 : 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) d.t2[a][b] = rng.exponential(ex3_lambda2(e, d.x1, a, d.x2[a], b));
  return d;
}

// ---------------------------------------------------------------------------
// Datasets

struct GeneratorSpec {
  Example example = Example::ex1;
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  std::optional<double> target_censoring;  // ex3: 0.15 or 0.40
  std::optional<double> c0;                // ex3: explicit C0 overrides the target
  bool keep_latents = false;
};

struct StaticLatent {
  double t0 = 0.0, t1 = 0.0;  // potential times
  double t = 0.0, c = 0.0;    // realized event and censoring times
};

struct StaticSample {
  StaticDataset data;
  std::vector<StaticLatent> latents;
};

struct DynamicLatent {
  DynamicDraw draw;
  double t = 0.0;  // event time under the received sequence (D1, D2)
};

struct DynamicSample {
  DynamicDataset data;
  std::vector<DynamicLatent> latents;
  double c0 = 0.0;
};

// C0 giving 15% / 40% overall censoring (bisection at n = 400000, seed 7,
// matched to +-0.001 on that sample).
inline double default_c0(Example e, double target) {
  struct Entry {
    Example e;
    double target, c0;
  };
  static const Entry table[] = {
      {Example::ex3a, 0.15, 19.7915}, {Example::ex3a, 0.40, 4.3294}, {Example::ex3b, 0.15, 15.2799},
      {Example::ex3b, 0.40, 4.8272},  {Example::ex3c, 0.15, 19.9307}, {Example::ex3c, 0.40, 5.2477},
  };
  for (const auto& t : table)
    if (t.e == e && std::abs(t.target - target) < 1e-9) return t.c0;
  throw parameter_error("no cached C0 for " + to_string(e) + " at censoring " + std::to_string(target) +
                        "; supply c0 explicitly or calibrate");
}

inline std::vector<std::string> generator_spec_problems(const GeneratorSpec& g) {
  std::vector<std::string> p;
  if (g.n < 1) p.push_back("n must be >= 1");
  if (!is_dynamic(g.example) && (g.target_censoring || g.c0))
    p.push_back("target_censoring / c0 apply only to ex3 examples");
  if (g.target_censoring && !(*g.target_censoring == 0.15 || *g.target_censoring == 0.40))
    p.push_back("target_censoring must be 0.15 or 0.40");
  if (g.c0 && !(*g.c0 > 0.0)) p.push_back("c0 must be positive");
  return p;
}

inline double resolve_c0(const GeneratorSpec& g) {
  if (g.c0) return *g.c0;
  return default_c0(g.example, g.target_censoring.value_or(0.15));
}

inline StaticSample generate_static(const GeneratorSpec& spec) {
  const auto probs = generator_spec_problems(spec);
  if (!probs.empty()) throw parameter_error(probs.front());
  if (is_dynamic(spec.example)) throw parameter_error("generate_static: two-stage example requested");
  Rng rng(spec.seed);
  std::vector<StaticRecord> recs;
  std::vector<StaticLatent> lat;
  recs.reserve(spec.n);
  if (spec.keep_latents) lat.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const StaticDraw d = spec.example == Example::ex1 ? draw_ex1(rng) : draw_ex2(rng);
    const double t = d.a == 1 ? d.t1 : d.t0;
    StaticRecord r;
    r.x = d.x;
    r.a = d.a;
    r.y = std::min(t, d.c);
    r.delta = t <= d.c ? 1 : 0;
    recs.push_back(std::move(r));
    if (spec.keep_latents) lat.push_back({d.t0, d.t1, t, d.c});
  }
  ValidationOptions vo;
  vo.allow_nonpositive_times = spec.example == Example::ex2;
  if (std::none_of(recs.begin(), recs.end(), [](const StaticRecord& r) { return r.delta == 1; }))
    throw estimation_error("generated sample has no uncensored events");
  return {StaticDataset(std::move(recs), 0.5, vo), std::move(lat)};
}

inline DynamicSample generate_dynamic(const GeneratorSpec& spec) {
  const auto probs = generator_spec_problems(spec);
  if (!probs.empty()) throw parameter_error(probs.front());
  if (!is_dynamic(spec.example)) throw parameter_error("generate_dynamic: one-stage example requested");
  const double c0 = resolve_c0(spec);
  Rng rng(spec.seed);
  std::vector<DynamicRecord> recs;
  std::vector<DynamicLatent> lat;
  recs.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const DynamicDraw d = draw_ex3(spec.example, c0, rng);
    const double t = d.potential(d.d1, d.d2);
    DynamicRecord r;
    r.x1 = {d.x1, 1.0};
    r.d1 = d.d1;
    r.z = std::min(d.t1[d.d1], d.c) > kStageSplit ? 1 : 0;
    if (r.z == 1) {
      r.x2 = {d.x2[d.d1]};
      r.d2 = d.d2;
    }
    r.y = std::min(t, d.c);
    r.delta = t <= d.c ? 1 : 0;
    recs.push_back(std::move(r));
    if (spec.keep_latents) lat.push_back({d, t});
  }
  if (std::none_of(recs.begin(), recs.end(), [](const DynamicRecord& r) { return r.delta == 1; }))
    throw estimation_error("generated sample has no uncensored events");
  return {DynamicDataset(std::move(recs), kStageSplit, 0.5, 0.5), std::move(lat), c0};
}

// Overall censoring fraction of ex3 at C0 over n draws.
inline double ex3_censoring_rate(Example e, double c0, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::size_t cens = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto d = draw_ex3(e, c0, rng);
    cens += d.potential(d.d1, d.d2) > d.c;
  }
  return static_cast<double>(cens) / static_cast<double>(n);
}

// Bisection for C0 hitting the target censoring rate. The rate is
// nonincreasing in C0 for a fixed stream (C = C0 U scales monotonically).
inline double calibrate_c0(Example e, double target, std::size_t n = 400000, std::uint64_t seed = 7,
                           double tol = 0.001) {
  double lo = 0.05, hi = 1000.0;
  if (ex3_censoring_rate(e, lo, n, seed) < target || ex3_censoring_rate(e, hi, n, seed) > target)
    throw estimation_error("calibrate_c0: target censoring rate not bracketed");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double rate = ex3_censoring_rate(e, mid, n, seed);
    if (std::abs(rate - target) <= tol && hi - lo < 1e-3) return mid;
    (rate > target ? lo : hi) = mid;
    if (hi - lo < 1e-6) break;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Truth oracle: empirical tau-quantile of the latent potential outcome under
// each grid rule, over n_mc latent draws with no censoring involved.

// Lower empirical quantile: the ceil(tau n)-th smallest value.
inline double empirical_quantile(std::vector<double>& v, double tau) {
  const auto n = static_cast<double>(v.size());
  auto k = static_cast<std::size_t>(std::ceil(tau * n));
  k = std::clamp<std::size_t>(k, 1, v.size());
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k - 1), v.end());
  return v[k - 1];
}

// One sign configuration and the box of its free parameters.
struct TruthRegion {
  std::vector<int> signs;
  std::vector<double> lower, upper;
};

struct TruthGrid {
  double coarse_step = 0.005;
  double fine_step = 0.005;
  std::size_t coarse_n = 0;  // draws used in the coarse pass (0: all)
  std::size_t top_k = 5;
};

struct TruthResult {
  std::vector<int> signs;
  std::vector<double> params;
  double value = 0.0;
  std::size_t evaluations = 0;
  std::size_t tied = 1;  // number of grid points sharing the maximum
};

// Evaluator: (signs, params, number of draws to use) -> quantile.
using TruthEvaluator = std::function<double(const std::vector<int>&, const std::vector<double>&, std::size_t)>;

namespace detail {

inline std::vector<std::vector<double>> lattice(const std::vector<double>& lo, const std::vector<double>& hi,
                                                const std::vector<double>& origin, double step) {
  // Points origin + k*step within [lo, hi] per coordinate, Cartesian product.
  std::vector<std::vector<double>> axes(lo.size());
  for (std::size_t j = 0; j < lo.size(); ++j) {
    const auto k0 = static_cast<long long>(std::ceil((lo[j] - origin[j]) / step - 1e-9));
    const auto k1 = static_cast<long long>(std::floor((hi[j] - origin[j]) / step + 1e-9));
    for (long long k = k0; k <= k1; ++k) axes[j].push_back(origin[j] + static_cast<double>(k) * step);
  }
  std::vector<std::vector<double>> pts{{}};
  for (const auto& ax : axes) {
    std::vector<std::vector<double>> next;
    for (const auto& p : pts)
      for (double v : ax) {
        auto q = p;
        q.push_back(v);
        next.push_back(std::move(q));
      }
    pts = std::move(next);
  }
  return pts;
}

struct Scored {
  std::size_t region;
  std::vector<double> params;
  double value;
};

}  // namespace detail

// Grid maximization. Ties at the maximum are resolved by taking the smallest
// sign configuration among the maximizers, then the tied grid point nearest
// the centroid of that configuration's tied points.
inline TruthResult grid_truth(const TruthEvaluator& eval, const std::vector<TruthRegion>& regions, const TruthGrid& grid,
                              std::size_t n_mc, unsigned threads = 1) {
  for (const auto& r : regions)
    for (std::size_t j = 0; j < r.lower.size(); ++j)
      if (!(r.upper[j] > r.lower[j])) throw parameter_error("truth grid bounds must have positive width");
  if (!(grid.fine_step > 0.0) || !(grid.coarse_step >= grid.fine_step))
    throw parameter_error("truth grid steps must satisfy 0 < fine_step <= coarse_step");

  TruthResult out;
  std::vector<detail::Scored> fine;
  auto evaluate_all = [&](std::vector<detail::Scored>& pts, std::size_t n_use) {
    parallel_for(pts.size(), threads, [&](std::size_t k) {
      pts[k].value = eval(regions[pts[k].region].signs, pts[k].params, n_use);
    });
    out.evaluations += pts.size();
  };

  const bool single = grid.coarse_step == grid.fine_step;
  if (single) {
    for (std::size_t r = 0; r < regions.size(); ++r)
      for (auto& p : detail::lattice(regions[r].lower, regions[r].upper, regions[r].lower, grid.fine_step))
        fine.push_back({r, std::move(p), 0.0});
    evaluate_all(fine, n_mc);
  } else {
    std::vector<detail::Scored> coarse;
    for (std::size_t r = 0; r < regions.size(); ++r)
      for (auto& p : detail::lattice(regions[r].lower, regions[r].upper, regions[r].lower, grid.coarse_step))
        coarse.push_back({r, std::move(p), 0.0});
    evaluate_all(coarse, grid.coarse_n == 0 ? n_mc : std::min(grid.coarse_n, n_mc));
    std::stable_sort(coarse.begin(), coarse.end(),
                     [](const detail::Scored& a, const detail::Scored& b) { return a.value > b.value; });
    std::map<std::pair<std::size_t, std::vector<long long>>, std::vector<double>> uniq;
    for (std::size_t k = 0; k < std::min(grid.top_k, coarse.size()); ++k) {
      const auto& c = coarse[k];
      const auto& reg = regions[c.region];
      std::vector<double> lo(c.params.size()), hi(c.params.size());
      for (std::size_t j = 0; j < lo.size(); ++j) {
        lo[j] = std::max(reg.lower[j], c.params[j] - grid.coarse_step);
        hi[j] = std::min(reg.upper[j], c.params[j] + grid.coarse_step);
      }
      for (auto& p : detail::lattice(lo, hi, reg.lower, grid.fine_step)) {
        std::vector<long long> key;
        for (std::size_t j = 0; j < p.size(); ++j) key.push_back(std::llround((p[j] - reg.lower[j]) / grid.fine_step));
        uniq.emplace(std::make_pair(c.region, key), p);
      }
    }
    for (auto& [key, p] : uniq) fine.push_back({key.first, p, 0.0});
    evaluate_all(fine, n_mc);
  }

  double best = -std::numeric_limits<double>::infinity();
  for (const auto& f : fine) best = std::max(best, f.value);
  std::size_t best_region = regions.size();
  for (const auto& f : fine)
    if (f.value == best && (best_region == regions.size() || regions[f.region].signs < regions[best_region].signs))
      best_region = f.region;
  std::vector<const detail::Scored*> tied;
  for (const auto& f : fine)
    if (f.value == best && f.region == best_region) tied.push_back(&f);
  std::vector<double> centroid(tied.front()->params.size(), 0.0);
  for (const auto* t : tied)
    for (std::size_t j = 0; j < centroid.size(); ++j) centroid[j] += t->params[j] / static_cast<double>(tied.size());
  const detail::Scored* pick = tied.front();
  double pick_d = std::numeric_limits<double>::infinity();
  for (const auto* t : tied) {
    double d = 0.0;
    for (std::size_t j = 0; j < centroid.size(); ++j) d += (t->params[j] - centroid[j]) * (t->params[j] - centroid[j]);
    if (d < pick_d) {
      pick_d = d;
      pick = t;
    }
  }
  out.signs = regions[best_region].signs;
  out.params = pick->params;
  out.value = best;
  out.tied = tied.size();
  return out;
}

// Latent populations for the static and two-stage designs.
// K potential outcomes per draw, ranked once over all n K values. The
// tau-quantile of any selection (one outcome per draw) is then found by
// bucket-counting ranks rather than by selecting over doubles.
class RankedOutcomes {
 public:
  RankedOutcomes() = default;
  RankedOutcomes(const std::vector<double>& values, std::size_t K) : K_(K), n_(values.size() / K) {
    std::vector<std::uint32_t> order(values.size());
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
      return values[a] < values[b] || (values[a] == values[b] && a < b);
    });
    sorted_.resize(values.size());
    rank_.resize(values.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
      sorted_[r] = values[order[r]];
      rank_[order[r]] = static_cast<std::uint32_t>(r);
    }
  }

  std::size_t size() const { return n_; }

  // choose(i) in [0, K) picks draw i's outcome; quantile over the first n_use draws.
  template <class Choose>
  double quantile(std::size_t n_use, double tau, Choose&& choose) const {
    n_use = std::min(n_use, n_);
    const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(tau * static_cast<double>(n_use))), 1, n_use);
    constexpr unsigned shift = 8;
    thread_local std::vector<std::uint32_t> picked;
    thread_local std::vector<std::uint32_t> count;
    picked.resize(n_use);
    count.assign((sorted_.size() >> shift) + 1, 0);
    for (std::size_t i = 0; i < n_use; ++i) {
      const std::uint32_t r = rank_[i * K_ + static_cast<std::size_t>(choose(i))];
      picked[i] = r;
      ++count[r >> shift];
    }
    std::size_t cum = 0, b = 0;
    while (cum + count[b] < k) cum += count[b++];
    std::vector<std::uint32_t> in_bucket;
    in_bucket.reserve(count[b]);
    for (std::size_t i = 0; i < n_use; ++i)
      if ((picked[i] >> shift) == b) in_bucket.push_back(picked[i]);
    const std::size_t j = k - cum - 1;
    std::nth_element(in_bucket.begin(), in_bucket.begin() + static_cast<std::ptrdiff_t>(j), in_bucket.end());
    return sorted_[in_bucket[j]];
  }

 private:
  std::size_t K_ = 1, n_ = 0;
  std::vector<double> sorted_;
  std::vector<std::uint32_t> rank_;
};

struct StaticPopulation {
  std::vector<double> x;  // row-major, p per draw
  std::size_t p = 0;
  std::vector<double> t0, t1;
  RankedOutcomes ranked;

  double value(int sign, const std::vector<double>& tail, double tau, std::size_t n_use) const {
    return ranked.quantile(n_use, tau, [&](std::size_t i) { return index_value(sign, tail, &x[i * p]) > 0.0 ? 1 : 0; });
  }

  // Direct selection over doubles; reference for value().
  double value_direct(int sign, const std::vector<double>& tail, double tau, std::size_t n_use) const {
    std::vector<double> t(std::min(n_use, t0.size()));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = index_value(sign, tail, &x[i * p]) > 0.0 ? t1[i] : t0[i];
    return empirical_quantile(t, tau);
  }
};

inline StaticPopulation static_population(Example e, std::size_t n, std::uint64_t seed) {
  if (is_dynamic(e)) throw parameter_error("static_population: two-stage example");
  Rng rng(seed);
  StaticPopulation pop;
  pop.t0.reserve(n);
  pop.t1.reserve(n);
  std::vector<double> both;
  both.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto d = e == Example::ex1 ? draw_ex1(rng) : draw_ex2(rng);
    pop.p = d.x.size();
    pop.x.insert(pop.x.end(), d.x.begin(), d.x.end());
    pop.t0.push_back(d.t0);
    pop.t1.push_back(d.t1);
    both.push_back(d.t0);
    both.push_back(d.t1);
  }
  pop.ranked = RankedOutcomes(both, 2);
  return pop;
}

struct DynamicPopulation {
  std::vector<DynamicDraw> draws;
  RankedOutcomes ranked;  // outcome index 2a + b

  // Rule: stage 1 I(s1 X1 + b > 0), stage 2 I(s2 X2 + z > 0).
  double value(int s1, double b, int s2, double z, double tau, std::size_t n_use) const {
    return ranked.quantile(n_use, tau, [&](std::size_t i) {
      const auto& d = draws[i];
      const int a = s1 * d.x1 + b > 0.0 ? 1 : 0;
      const int c = s2 * d.x2[a] + z > 0.0 ? 1 : 0;
      return 2 * a + c;
    });
  }

  double value_direct(int s1, double b, int s2, double z, double tau, std::size_t n_use) const {
    std::vector<double> t(std::min(n_use, draws.size()));
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto& d = draws[i];
      const int a = s1 * d.x1 + b > 0.0 ? 1 : 0;
      const int c = s2 * d.x2[a] + z > 0.0 ? 1 : 0;
      t[i] = d.potential(a, c);
    }
    return empirical_quantile(t, tau);
  }
};

inline DynamicPopulation dynamic_population(Example e, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  DynamicPopulation pop;
  pop.draws.reserve(n);
  std::vector<double> all;
  all.reserve(4 * n);
  for (std::size_t i = 0; i < n; ++i) {
    pop.draws.push_back(draw_ex3(e, 1.0, rng));
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) all.push_back(pop.draws.back().potential(a, b));
  }
  pop.ranked = RankedOutcomes(all, 4);
  return pop;
}

// Default search regions: the identifiable range of each design's free
// coefficients for each sign.
inline std::vector<TruthRegion> default_truth_regions(Example e) {
  switch (e) {
    case Example::ex1: return {{{-1}, {0.0}, {2.0}}, {{1}, {-2.0}, {0.0}}};
    case Example::ex2:
      return {{{-1}, {-1.0, -3.0}, {4.0, 3.0}}, {{1}, {-4.0, -3.0}, {1.0, 3.0}}};
    default:
      return {{{-1, -1}, {0.0, -0.5}, {4.0, 4.5}},
              {{-1, 1}, {0.0, -4.5}, {4.0, 0.5}},
              {{1, -1}, {-4.0, -0.5}, {0.0, 4.5}},
              {{1, 1}, {-4.0, -4.5}, {0.0, 0.5}}};
  }
}

inline TruthGrid default_truth_grid(Example e) {
  if (e == Example::ex1) return {0.005, 0.005, 0, 1};
  return {0.1, 0.01, 200000, 6};
}

struct TruthRequest {
  Example example = Example::ex1;
  double tau = 0.5;
  std::size_t n_mc = 1000000;
  std::uint64_t seed = 12345;
  std::optional<std::vector<TruthRegion>> regions;
  std::optional<TruthGrid> grid;
  unsigned threads = 1;
};

inline TruthResult truth_oracle(const TruthRequest& req) {
  validate_quantile({req.tau});
  const auto regions = req.regions.value_or(default_truth_regions(req.example));
  const auto grid = req.grid.value_or(default_truth_grid(req.example));
  if (!is_dynamic(req.example)) {
    const auto pop = static_population(req.example, req.n_mc, req.seed);
    return grid_truth(
        [&](const std::vector<int>& s, const std::vector<double>& p, std::size_t n) {
          return pop.value(s[0], p, req.tau, n);
        },
        regions, grid, req.n_mc, req.threads);
  }
  const auto pop = dynamic_population(req.example, req.n_mc, req.seed);
  return grid_truth(
      [&](const std::vector<int>& s, const std::vector<double>& p, std::size_t n) {
        return pop.value(s[0], p[0], s[1], p[1], req.tau, n);
      },
      regions, grid, req.n_mc, req.threads);
}

// ---------------------------------------------------------------------------
// Monte Carlo drivers

struct Truth {
  int sign = 1;
  std::vector<double> tail;
  double q = 0.0;
  // two-stage only
  int sign2 = -1;
  std::vector<double> tail2;
};

// Values from the published truth tables (Monte Carlo with 10^7 draws).
inline Truth published_truth(Example e, double tau) {
  auto eq = [](double a, double b) { return std::abs(a - b) < 1e-9; };
  if (e == Example::ex1 && eq(tau, 0.25)) return {1, {-0.428}, 1.658, -1, {}};
  if (e == Example::ex1 && eq(tau, 0.5)) return {1, {-0.552}, 2.258, -1, {}};
  if (e == Example::ex2 && eq(tau, 0.1)) return {-1, {0.896, -0.774}, 1.853, -1, {}};
  if (e == Example::ex2 && eq(tau, 0.25)) return {-1, {1.140, -0.825}, 2.247, -1, {}};
  if (e == Example::ex3a && eq(tau, 0.3)) return {-1, {2.00}, 1.524, -1, {2.0}};
  if (e == Example::ex3b && eq(tau, 0.3)) return {1, {-1.95}, 1.566, -1, {2.0}};
  if (e == Example::ex3c && eq(tau, 0.3)) return {-1, {2.94}, 2.132, -1, {2.0}};
  throw parameter_error("no published truth for " + to_string(e) + " at tau " + std::to_string(tau));
}

enum class Method { proposed, naive };

inline std::string to_string(Method m) { return m == Method::proposed ? "new" : "naive"; }

inline Method parse_method(const std::string& s) {
  if (s == "new") return Method::proposed;
  if (s == "naive") return Method::naive;
  throw parameter_error("unknown method '" + s + "' (expected new or naive)");
}

struct ReplicationRow {
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  int sign = 0;
  std::vector<double> tail;
  int sign2 = 0;  // two-stage only
  std::vector<double> tail2;
  double value = 0.0;
  double censoring_rate = 0.0;
  std::size_t n_effective = 0;
};

struct Summary {
  std::vector<double> bias, sd;    // per tail coefficient (stage 1, then stage 2), correct-sign runs only
  std::vector<double> rmse;        // same runs
  double bias_q = 0.0, sd_q = 0.0, rmse_q = 0.0;  // all runs
  double sign_error_rate = 0.0;
  std::size_t correct_sign_runs = 0;
  double mean_censoring = 0.0;
};

struct Experiment {
  std::vector<ReplicationRow> rows;
  Summary summary;
};

struct ExperimentSpec {
  Example example = Example::ex1;
  double tau = 0.5;
  std::size_t n = 1000;
  std::size_t reps = 100;
  Method method = Method::proposed;
  std::uint64_t seed = 1;
  Truth truth;
  SearchConfig search;
  FitOptions fit;  // static designs; censoring model overridden to naive for Method::naive
  std::optional<double> target_censoring;  // ex3
  std::optional<double> c0;
  unsigned threads = 1;
};

inline Summary summarize(const std::vector<ReplicationRow>& rows, const Truth& truth) {
  Summary s;
  if (rows.empty()) return s;
  const std::size_t k1 = truth.tail.size(), k2 = truth.tail2.size();
  std::vector<std::vector<double>> err(k1 + k2);
  std::vector<double> qerr;
  std::size_t wrong = 0;
  for (const auto& r : rows) {
    qerr.push_back(r.value - truth.q);
    s.mean_censoring += r.censoring_rate / static_cast<double>(rows.size());
    const bool ok = r.sign == truth.sign && (k2 == 0 || r.sign2 == truth.sign2);
    if (!ok) {
      ++wrong;
      continue;
    }
    for (std::size_t j = 0; j < k1; ++j) err[j].push_back(r.tail[j] - truth.tail[j]);
    for (std::size_t j = 0; j < k2; ++j) err[k1 + j].push_back(r.tail2[j] - truth.tail2[j]);
  }
  auto stats = [](const std::vector<double>& e, double& bias, double& sd, double& rmse) {
    if (e.empty()) {
      bias = sd = rmse = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    const double n = static_cast<double>(e.size());
    double m = 0.0, ss = 0.0;
    for (double v : e) m += v;
    m /= n;
    for (double v : e) ss += (v - m) * (v - m);
    bias = m;
    sd = e.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    double sq = 0.0;
    for (double v : e) sq += v * v;
    rmse = std::sqrt(sq / n);
  };
  s.bias.resize(k1 + k2);
  s.sd.resize(k1 + k2);
  s.rmse.resize(k1 + k2);
  for (std::size_t j = 0; j < k1 + k2; ++j) stats(err[j], s.bias[j], s.sd[j], s.rmse[j]);
  stats(qerr, s.bias_q, s.sd_q, s.rmse_q);
  s.correct_sign_runs = rows.size() - wrong;
  s.sign_error_rate = static_cast<double>(wrong) / static_cast<double>(rows.size());
  return s;
}

// Replication r uses data seed derive_seed(seed, 1, r) and search seed
// derive_seed(seed, 2, r).
inline Experiment mc_experiment(const ExperimentSpec& spec) {
  validate_quantile({spec.tau});
  if (spec.reps < 1) throw parameter_error("reps must be >= 1");
  std::vector<ReplicationRow> rows(spec.reps);
  parallel_for(spec.reps, spec.threads, [&](std::size_t r) {
    GeneratorSpec g;
    g.example = spec.example;
    g.n = spec.n;
    g.seed = derive_seed(spec.seed, 1, r);
    g.target_censoring = spec.target_censoring;
    g.c0 = spec.c0;
    SearchConfig sc = spec.search;
    sc.seed = derive_seed(spec.seed, 2, r);
    sc.threads = 1;
    ReplicationRow row;
    row.rep = r;
    row.seed = g.seed;
    if (!is_dynamic(spec.example)) {
      const auto sample = generate_static(g);
      FitOptions fo = spec.fit;
      if (spec.method == Method::naive) fo.censoring = CensoringModel::naive;
      const auto fit = fit_static(sample.data, {spec.tau}, sc, fo);
      row.sign = fit.rule.sign;
      row.tail = fit.rule.tail;
      row.value = fit.value;
      row.censoring_rate = sample.data.censoring_rate();
      row.n_effective = fit.n_effective;
    } else {
      const auto sample = generate_dynamic(g);
      DynamicFitOptions fo;
      fo.weights = spec.fit.weights;
      fo.cutoff = spec.fit.cutoff;
      fo.naive = spec.method == Method::naive;
      fo.stage2_features = {3, 1};  // (X2, intercept) from h2 = (X1, 1, D1, X2)
      const auto fit = fit_dynamic(sample.data, {spec.tau}, sc, fo);
      row.sign = fit.rule.stage1.sign;
      row.tail = fit.rule.stage1.tail;
      row.sign2 = fit.rule.stage2.sign;
      row.tail2 = fit.rule.stage2.tail;
      row.value = fit.value;
      row.censoring_rate = sample.data.censoring_rate();
      row.n_effective = fit.n_effective;
    }
    rows[r] = std::move(row);
  });
  Experiment ex;
  ex.summary = summarize(rows, spec.truth);
  ex.rows = std::move(rows);
  return ex;
}

// Empirical coverage of the perturbation-bootstrap intervals for static
// designs. Replication r: data seed derive_seed(seed, 1, r), search seed
// derive_seed(seed, 2, r), smoothing/bootstrap seed derive_seed(seed, 3, r).
struct CoverageSpec {
  Example example = Example::ex1;
  double tau = 0.5;
  std::size_t n = 500;
  std::size_t reps = 150;
  std::uint64_t seed = 1;
  Truth truth;
  SearchConfig search;
  FitOptions fit;
  SmoothConfig smooth;  // seed and threads overridden per replication
  unsigned threads = 1;
};

struct CoverageRow {
  std::size_t rep = 0;
  int sign = 0;
  std::vector<double> beta_bar;
  std::vector<CoefficientInterval> ci;
  double bandwidth = 0.0;
  std::vector<bool> covered;  // empty when the fitted sign is wrong
};

struct CoverageResult {
  std::vector<CoverageRow> rows;
  std::vector<double> coverage;     // per tail coefficient, over all replications
  std::vector<double> mean_length;  // per tail coefficient
  std::size_t sign_errors = 0;
};

inline CoverageResult coverage_experiment(const CoverageSpec& spec) {
  if (is_dynamic(spec.example)) throw parameter_error("coverage experiments cover static designs only");
  validate_quantile({spec.tau});
  if (spec.reps < 1) throw parameter_error("reps must be >= 1");
  std::vector<CoverageRow> rows(spec.reps);
  parallel_for(spec.reps, spec.threads, [&](std::size_t r) {
    GeneratorSpec g;
    g.example = spec.example;
    g.n = spec.n;
    g.seed = derive_seed(spec.seed, 1, r);
    const auto sample = generate_static(g);
    SearchConfig sc = spec.search;
    sc.seed = derive_seed(spec.seed, 2, r);
    sc.threads = 1;
    const auto prep = prepare_static(sample.data, spec.fit);
    const auto prior = fit_prepared(prep, {spec.tau}, sc);
    SmoothConfig cfg = spec.smooth;
    cfg.seed = derive_seed(spec.seed, 3, r);
    cfg.threads = 1;
    const auto point = fit_smoothed(prep, prior, cfg);
    const auto inf = perturb_bootstrap(prep, prior, point, cfg);
    CoverageRow row;
    row.rep = r;
    row.sign = point.rule.sign;
    row.beta_bar = point.rule.tail;
    row.ci = inf.ci;
    row.bandwidth = point.bandwidth;
    if (row.sign == spec.truth.sign)
      for (std::size_t j = 0; j < row.ci.size(); ++j)
        row.covered.push_back(row.ci[j].lo <= spec.truth.tail[j] && spec.truth.tail[j] <= row.ci[j].hi);
    rows[r] = std::move(row);
  });
  CoverageResult out;
  const std::size_t k = spec.truth.tail.size();
  out.coverage.assign(k, 0.0);
  out.mean_length.assign(k, 0.0);
  const double R = static_cast<double>(rows.size());
  for (const auto& row : rows) {
    if (row.covered.empty()) ++out.sign_errors;
    for (std::size_t j = 0; j < k; ++j) {
      if (!row.covered.empty() && row.covered[j]) out.coverage[j] += 1.0 / R;
      out.mean_length[j] += (row.ci[j].hi - row.ci[j].lo) / R;
    }
  }
  out.rows = std::move(rows);
  return out;
}

}  // namespace qdr
