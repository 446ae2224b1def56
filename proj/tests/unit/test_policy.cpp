#include <catch_amalgamated.hpp>

#include <cmath>

#include "support.hpp"

using namespace qdr;

namespace {

SearchConfig box(double lo, double hi, std::size_t dim = 1) {
  SearchConfig c;
  c.lower.assign(dim, lo);
  c.upper.assign(dim, hi);
  return c;
}

}  // namespace

TEST_CASE("GA finds the grid optimum of a one-coefficient rule", "[policy][search]") {
  // 40 points, p = 2, box [-4, 4]; exhaustive grid at step 0.005 over both signs.
  Rng rng(8);
  const double step = 0.005;
  for (int k = 0; k < 10; ++k) {
    const auto ds = test::random_static(rng, 40);
    const auto g = censoring_probabilities(ds, km_censoring(ds));
    const double tau = rng.uniform(0.2, 0.8);
    const StaticObjective obj(ds, g, {tau});

    double grid_best = -std::numeric_limits<double>::infinity();
    std::vector<std::pair<int, double>> argmax;
    for (int sign : {-1, 1}) {
      for (int i = 0; i <= 1600; ++i) {
        const double b = -4.0 + step * i;
        const double v = obj(sign, std::vector<double>{b});
        if (v > grid_best) {
          grid_best = v;
          argmax.clear();
        }
        if (v == grid_best) argmax.emplace_back(sign, b);
      }
    }

    SearchConfig cfg = box(-4, 4);
    cfg.seed = 100 + static_cast<std::uint64_t>(k);
    const auto fit = fit_static(ds, {tau}, cfg);
    INFO("case " << k << " grid best " << grid_best << " fit " << fit.value);
    REQUIRE(fit.value >= grid_best);
    if (fit.value == grid_best) {
      double dist = std::numeric_limits<double>::infinity();
      for (const auto& [s, b] : argmax)
        if (s == fit.rule.sign) dist = std::min(dist, std::abs(b - fit.rule.tail[0]));
      CHECK(dist <= step + 1e-12);
    }
    CHECK(fit.value == q_hat(ds, fit.rule, g, {tau}));
  }
}

TEST_CASE("fit is deterministic in the seed and independent of threads", "[policy][search]") {
  const auto s = generate_static({Example::ex2, 400, 12});
  SearchConfig cfg = box(-5, 5, 2);
  cfg.seed = 42;
  FitOptions fo;
  const auto a = fit_static(s.data, {0.25}, cfg, fo);
  const auto b = fit_static(s.data, {0.25}, cfg, fo);
  cfg.threads = 3;
  const auto c = fit_static(s.data, {0.25}, cfg, fo);
  CHECK(a.rule == b.rule);
  CHECK(a.rule == c.rule);
  CHECK(a.value == c.value);
  CHECK(a.objective_trace == c.objective_trace);
  CHECK(a.evaluations == c.evaluations);
}

TEST_CASE("objective trace is a running maximum", "[policy][search]") {
  const auto s = generate_static({Example::ex1, 300, 3});
  const auto fit = fit_static(s.data, {0.5}, box(-3, 3));
  REQUIRE(!fit.objective_trace.empty());
  for (std::size_t i = 1; i < fit.objective_trace.size(); ++i)
    CHECK(fit.objective_trace[i] >= fit.objective_trace[i - 1]);
  CHECK(fit.objective_trace.back() == fit.value);
}

TEST_CASE("tie order across signs and restarts", "[policy]") {
  CHECK(better_rule(2.0, 1, {0.0}, 1.0, -1, {0.0}));
  CHECK(better_rule(1.0, -1, {0.5}, 1.0, 1, {0.0}));
  CHECK(better_rule(1.0, 1, {0.1}, 1.0, 1, {0.2}));
  CHECK_FALSE(better_rule(1.0, 1, {0.2}, 1.0, 1, {0.2}));
}

TEST_CASE("Example 1 fit recovers the sign and the tail", "[policy]") {
  const auto s = generate_static({Example::ex1, 1000, 2});
  const auto fit = fit_static(s.data, {0.5}, box(-3, 3));
  CHECK(fit.rule.sign == 1);
  CHECK(std::abs(fit.rule.tail[0] + 0.552) < 0.2);
  CHECK(fit.n == 1000);
  CHECK(fit.n_effective > 200);
  CHECK(std::abs(fit.censoring_rate - s.data.censoring_rate()) < 1e-15);
}

TEST_CASE("censoring models change only the denominators", "[policy]") {
  const auto s = generate_static({Example::ex2, 300, 9});
  FitOptions fo;
  const auto km = prepare_static(s.data, fo);
  REQUIRE(km.curve);
  fo.censoring = CensoringModel::naive;
  const auto naive = prepare_static(s.data, fo);
  CHECK(naive.data.censoring_rate() == 0.0);
  for (double g : naive.g) CHECK(g == 1.0);
  fo.censoring = CensoringModel::local_km;
  fo.kernel.bandwidth = 0.1;
  const auto local = prepare_static(s.data, fo);
  for (double g : local.g) CHECK((g >= 0.01 && g <= 1.0));
  fo.cutoff = 3.0;
  const auto cut = prepare_static(s.data, fo);
  for (const auto& r : cut.data.records()) CHECK(r.y <= 3.0);
}

TEST_CASE("search configuration problems are all reported", "[policy][search]") {
  SearchConfig c;
  c.lower = {0.0, 1.0};
  c.upper = {1.0, 0.0};
  c.population_size = 2;
  c.restarts = 0;
  const auto p = search_config_problems(c, 2);
  CHECK(p.size() == 4);
  CHECK_THROWS_AS(validate_search_config(c, 2), parameter_error);
  const auto s = generate_static({Example::ex1, 100, 3});
  CHECK_THROWS_AS(fit_static(s.data, {0.5}, box(-1, 1, 3)), parameter_error);
}

TEST_CASE("pinned coordinates stay fixed", "[policy][search]") {
  const auto s = generate_static({Example::ex2, 300, 4});
  SearchConfig c;
  c.lower = {0.9, -3.0};
  c.upper = {0.9, 3.0};
  const auto fit = fit_static(s.data, {0.25}, c);
  CHECK(fit.rule.tail[0] == 0.9);
}

TEST_CASE("polish stops at a fixed point on a smooth bowl", "[policy][search]") {
  const auto f = [](std::span<const double> x) { return -(x[0] - 0.3) * (x[0] - 0.3) - (x[1] + 1.2) * (x[1] + 1.2); };
  const auto r = polish(f, {0.0, 0.0}, {-2, -2}, {2, 2});
  CHECK(r.converged);
  CHECK(std::abs(r.point[0] - 0.3) < 1e-3);
  CHECK(std::abs(r.point[1] + 1.2) < 1e-3);
}
