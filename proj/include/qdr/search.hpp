#pragma once

// Derivative-free maximization over a box: a real-coded evolutionary search
// (elitism, tournament selection, blend crossover, annealed Gaussian
// mutation) and a coordinate-wise scan + golden-section polish for smooth
// objectives.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qdr/errors.hpp"
#include "qdr/parallel.hpp"
#include "qdr/rng.hpp"

namespace qdr {

struct SearchConfig {
  // Per-coordinate bounds of the free coefficients. An empty box is filled
  // with [-10, 10] for every coordinate by the fitting routines. lower ==
  // upper pins a coordinate.
  std::vector<double> lower;
  std::vector<double> upper;
  int population_size = 60;
  int generations = 80;
  double mutation_scale = 0.15;
  double crossover_rate = 0.7;
  int elite_count = 2;
  int restarts = 2;
  std::uint64_t seed = 20240601;
  // Mutation scale decays geometrically to mutation_scale * final_mutation_ratio
  // over the generations.
  double final_mutation_ratio = 1e-3;
  unsigned threads = 1;
};

inline std::vector<std::string> search_config_problems(const SearchConfig& c, std::size_t dim) {
  std::vector<std::string> p;
  if (c.lower.size() != dim || c.upper.size() != dim)
    p.push_back("search box must have " + std::to_string(dim) + " coordinates");
  for (std::size_t j = 0; j < std::min(c.lower.size(), c.upper.size()); ++j)
    if (!std::isfinite(c.lower[j]) || !std::isfinite(c.upper[j]) || c.lower[j] > c.upper[j])
      p.push_back("search box coordinate " + std::to_string(j + 1) + " needs finite lower <= upper");
  if (c.population_size < 4) p.push_back("population_size must be >= 4");
  if (c.generations < 1) p.push_back("generations must be >= 1");
  if (!(c.mutation_scale > 0.0)) p.push_back("mutation_scale must be positive");
  if (!(c.crossover_rate >= 0.0 && c.crossover_rate <= 1.0)) p.push_back("crossover_rate must lie in [0,1]");
  if (c.elite_count < 1 || c.elite_count >= c.population_size)
    p.push_back("elite_count must be >= 1 and < population_size");
  if (c.restarts < 1) p.push_back("restarts must be >= 1");
  if (!(c.final_mutation_ratio > 0.0 && c.final_mutation_ratio <= 1.0))
    p.push_back("final_mutation_ratio must lie in (0,1]");
  return p;
}

inline void validate_search_config(const SearchConfig& c, std::size_t dim) {
  const auto p = search_config_problems(c, dim);
  if (!p.empty()) throw parameter_error(p.front());
}

struct SearchResult {
  std::vector<double> best;
  double value = -std::numeric_limits<double>::infinity();
  std::vector<double> trace;  // running best after each generation
  std::size_t evaluations = 0;
};

using Objective = std::function<double(std::span<const double>)>;

// One evolutionary run. The objective must be safe to call concurrently when
// cfg.threads > 1. Within a run, equal values keep their population order and
// the incumbent best is replaced only on strict improvement: on the flat
// plateaus of a quantile objective, preferring the lexicographically smaller
// point would drift estimates toward the plateau's lower edge.
inline SearchResult evolve(const Objective& f, const SearchConfig& cfg, Rng& rng) {
  const std::size_t dim = cfg.lower.size();
  const std::size_t P = static_cast<std::size_t>(cfg.population_size);
  std::vector<double> width(dim);
  for (std::size_t j = 0; j < dim; ++j) width[j] = cfg.upper[j] - cfg.lower[j];

  auto clip = [&](std::vector<double>& x) {
    for (std::size_t j = 0; j < dim; ++j) x[j] = std::clamp(x[j], cfg.lower[j], cfg.upper[j]);
  };

  std::vector<std::vector<double>> pop(P, std::vector<double>(dim));
  for (auto& x : pop)
    for (std::size_t j = 0; j < dim; ++j) x[j] = width[j] > 0.0 ? rng.uniform(cfg.lower[j], cfg.upper[j]) : cfg.lower[j];

  SearchResult res;
  std::vector<double> fit(P);
  std::vector<std::size_t> rank(P);
  const int G = cfg.generations;
  for (int g = 0; g < G; ++g) {
    parallel_for(P, cfg.threads, [&](std::size_t i) { fit[i] = f(pop[i]); });
    res.evaluations += P;
    for (std::size_t i = 0; i < P; ++i)
      if (res.best.empty() || fit[i] > res.value) {
        res.value = fit[i];
        res.best = pop[i];
      }
    res.trace.push_back(res.value);
    if (g + 1 == G) break;

    std::iota(rank.begin(), rank.end(), std::size_t{0});
    std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return fit[a] > fit[b]; });
    auto tournament = [&]() {
      std::size_t best = static_cast<std::size_t>(rng.below(P));
      for (int k = 1; k < 3; ++k) {
        const auto c = static_cast<std::size_t>(rng.below(P));
        if (fit[c] > fit[best]) best = c;
      }
      return best;
    };
    const double progress = G > 1 ? static_cast<double>(g + 1) / static_cast<double>(G - 1) : 1.0;
    const double sigma = cfg.mutation_scale * std::pow(cfg.final_mutation_ratio, progress);

    std::vector<std::vector<double>> next;
    next.reserve(P);
    for (int e = 0; e < cfg.elite_count; ++e) next.push_back(pop[rank[static_cast<std::size_t>(e)]]);
    while (next.size() < P) {
      const auto& p1 = pop[tournament()];
      const auto& p2 = pop[tournament()];
      std::vector<double> child = p1;
      if (rng.uniform() < cfg.crossover_rate) {
        for (std::size_t j = 0; j < dim; ++j) {
          const double gamma = rng.uniform(-0.5, 1.5);
          child[j] = p1[j] + gamma * (p2[j] - p1[j]);
        }
      }
      for (std::size_t j = 0; j < dim; ++j)
        if (width[j] > 0.0) child[j] += rng.normal(0.0, sigma * width[j]);
      clip(child);
      next.push_back(std::move(child));
    }
    pop = std::move(next);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Polish: coordinate-wise 21-point scan over [x_j - r, x_j + r] followed by
// golden-section refinement around the best scan point. A move is accepted
// only on strict improvement; any accepted move restarts the radius cascade
// r0, r0/2, ... down to tol, and the routine stops after a full cascade with
// no move. The returned point is therefore a fixed point of the routine.

struct PolishConfig {
  double initial_radius = 0.5;
  double tolerance = 1e-4;
  int scan_points = 21;
  int golden_iterations = 30;
  int max_cascades = 200;
};

struct PolishResult {
  std::vector<double> point;
  double value = 0.0;
  std::size_t evaluations = 0;
  bool converged = false;  // false when max_cascades ran out
};

inline PolishResult polish(const Objective& f, std::vector<double> x, const std::vector<double>& lower,
                           const std::vector<double>& upper, const PolishConfig& pc = {}) {
  PolishResult res;
  const std::size_t dim = x.size();
  for (std::size_t j = 0; j < dim; ++j) x[j] = std::clamp(x[j], lower[j], upper[j]);
  double fx = f(x);
  ++res.evaluations;
  auto eval_at = [&](std::size_t j, double t) {
    std::vector<double> y = x;
    y[j] = t;
    ++res.evaluations;
    return f(y);
  };

  for (int cascade = 0; cascade < pc.max_cascades; ++cascade) {
    bool moved = false;
    for (double r = pc.initial_radius; r >= pc.tolerance && !moved; r *= 0.5) {
      for (std::size_t j = 0; j < dim; ++j) {
        if (!(upper[j] > lower[j])) continue;
        const double lo = std::max(lower[j], x[j] - r);
        const double hi = std::min(upper[j], x[j] + r);
        const int K = pc.scan_points;
        std::vector<double> ts(static_cast<std::size_t>(K)), vs(static_cast<std::size_t>(K));
        std::size_t bi = 0;
        for (int k = 0; k < K; ++k) {
          const double t = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(K - 1);
          ts[static_cast<std::size_t>(k)] = t;
          vs[static_cast<std::size_t>(k)] = eval_at(j, t);
          if (vs[static_cast<std::size_t>(k)] > vs[bi]) bi = static_cast<std::size_t>(k);
        }
        double best_t = ts[bi], best_v = vs[bi];
        // Golden-section maximization on the bracket around the best scan point.
        double a = ts[bi > 0 ? bi - 1 : 0];
        double b = ts[bi + 1 < ts.size() ? bi + 1 : bi];
        const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
        double c = b - phi * (b - a), d = a + phi * (b - a);
        double fc = eval_at(j, c), fd = eval_at(j, d);
        for (int it = 0; it < pc.golden_iterations && b - a > 1e-12; ++it) {
          if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval_at(j, c);
          } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval_at(j, d);
          }
        }
        if (fc > best_v) { best_v = fc; best_t = c; }
        if (fd > best_v) { best_v = fd; best_t = d; }
        if (best_v > fx) {
          x[j] = best_t;
          fx = best_v;
          moved = true;
        }
      }
    }
    if (!moved) {
      res.converged = true;
      break;
    }
  }
  res.point = std::move(x);
  res.value = fx;
  return res;
}

}  // namespace qdr
