#include <catch_amalgamated.hpp>

#include <cmath>

#include "support.hpp"

using namespace qdr;
using Catch::Matchers::WithinAbs;

namespace {

SearchConfig box1(double lo, double hi) {
  SearchConfig c;
  c.lower = {lo};
  c.upper = {hi};
  return c;
}

struct Ex1Fit {
  PreparedStatic prep;
  PolicyFitReport prior;
};

Ex1Fit ex1_fit(std::size_t n, std::uint64_t seed) {
  const auto s = generate_static({Example::ex1, n, seed});
  auto prep = prepare_static(s.data, {});
  auto prior = fit_prepared(prep, {0.5}, box1(-3, 3));
  return {std::move(prep), std::move(prior)};
}

}  // namespace

TEST_CASE("perturbation weight laws have mean 1 and variance 1", "[inference]") {
  for (auto law : {WeightLaw::exponential, WeightLaw::two_point}) {
    Rng rng(55);
    const int N = 400000;
    double s = 0.0, ss = 0.0;
    for (int i = 0; i < N; ++i) {
      const double w = draw_weight(law, rng);
      CHECK(w > 0.0);
      s += w;
      ss += w * w;
    }
    const double mean = s / N;
    const double var = ss / N - mean * mean;
    CHECK_THAT(mean, WithinAbs(1.0, 0.01));
    CHECK_THAT(var, WithinAbs(1.0, 0.03));
  }
  Rng rng(1);
  CHECK(draw_weight(WeightLaw::unit, rng) == 1.0);
}

TEST_CASE("type-7 sample quantile", "[inference]") {
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(sorted_quantile(v, 0.0) == 1.0);
  CHECK(sorted_quantile(v, 1.0) == 4.0);
  CHECK_THAT(sorted_quantile(v, 0.5), WithinAbs(2.5, 1e-15));
  CHECK_THAT(sorted_quantile(v, 0.1), WithinAbs(1.3, 1e-15));
  CHECK_THROWS_AS(sorted_quantile({}, 0.5), estimation_error);
}

TEST_CASE("pivot intervals reflect the bootstrap spread around the center", "[inference]") {
  const std::vector<std::vector<double>> reps{{0.8}, {0.9}, {1.1}, {1.2}, {1.0}};
  const auto ci = pivot_intervals({1.0}, reps, 1.0, 0.5);
  CHECK_THAT(ci[0].lo, WithinAbs(0.9, 1e-15));
  CHECK_THAT(ci[0].hi, WithinAbs(1.1, 1e-15));
  // Skewed replicates flip sides: the pivot interval is reflected.
  const std::vector<std::vector<double>> skew{{1.0}, {1.0}, {1.0}, {1.4}};
  const auto c2 = pivot_intervals({1.0}, skew, 2.0, 0.1);
  CHECK(c2[0].hi == 1.0);
  CHECK(c2[0].lo < 1.0);
}

TEST_CASE("percentile intervals keep the bootstrap skew on its own side", "[inference]") {
  const std::vector<std::vector<double>> skew{{1.0}, {1.0}, {1.0}, {1.4}};
  const auto p = percentile_intervals(skew, 1, 0.1);
  CHECK(p[0].lo == 1.0);
  CHECK_THAT(p[0].hi, WithinAbs(1.0 + 0.4 * 0.85, 1e-12));  // type-7 at 0.95 of 4 points
  const auto piv = pivot_intervals({1.0}, skew, 2.0, 0.1);
  CHECK_THAT(piv[0].lo, WithinAbs(2.0 - p[0].hi, 1e-12));  // reflection about the center
  CHECK_THAT(piv[0].hi, WithinAbs(2.0 - p[0].lo, 1e-12));
}

TEST_CASE("smoothed objective limits", "[inference]") {
  const auto s = generate_static({Example::ex1, 300, 4});
  const auto prep = prepare_static(s.data, {});
  const double v = 2.0;
  const std::vector<double> tail{-0.55};

  double literal_ind = 0.0, literal_half = 0.0;
  for (std::size_t i = 0; i < prep.data.size(); ++i) {
    const auto& r = prep.data[i];
    if (r.delta == 0 || !(r.y > v)) continue;
    const double c = (2.0 * r.a - 1.0) / prep.g[i];  // pi = 1/2
    literal_half += 0.5 * c;
    if (index_value(1, tail, r.x.data()) > 0.0) literal_ind += c;
  }
  const double n = static_cast<double>(prep.data.size());

  const SmoothedObjective tiny(prep.data, prep.g, v, 1e-12);
  const SmoothedObjective huge(prep.data, prep.g, v, 1e12);
  CHECK_THAT(tiny(1, tail), WithinAbs(literal_ind / n, 1e-12));
  CHECK_THAT(tiny.indicator(1, tail), WithinAbs(literal_ind / n, 1e-12));
  CHECK_THAT(huge(1, tail), WithinAbs(literal_half / n, 1e-9));
  CHECK_THAT(smoothed_objective(prep.data, 1, tail, v, prep.g, 1e-12), WithinAbs(literal_ind / n, 1e-12));

  std::vector<double> xi(prep.data.size(), 2.0);
  const SmoothedObjective doubled(prep.data, prep.g, v, 0.1, xi);
  const SmoothedObjective plain(prep.data, prep.g, v, 0.1);
  CHECK_THAT(doubled(1, tail), WithinAbs(2.0 * plain(1, tail), 1e-12));
  CHECK_THROWS_AS(SmoothedObjective(prep.data, prep.g, v, 0.0), parameter_error);
}

TEST_CASE("unit perturbation weights reproduce the point estimate", "[inference]") {
  const auto f = ex1_fit(400, 6);
  SmoothConfig cfg;
  cfg.bandwidth = 0.1;
  cfg.bootstrap_reps = 10;
  cfg.weight_law = WeightLaw::unit;
  cfg.search = box1(-3, 3);
  const auto point = fit_smoothed(f.prep, f.prior, cfg);
  const auto rep = perturb_bootstrap(f.prep, f.prior, point, cfg);
  REQUIRE(rep.replicates_used == 10);
  for (const auto& r : rep.replicates) CHECK(r == point.rule.tail);
  CHECK(rep.ci[0].lo == point.rule.tail[0]);
  CHECK(rep.ci[0].hi == point.rule.tail[0]);
}

TEST_CASE("perturbation intervals nest in the level and ignore threads", "[inference]") {
  const auto f = ex1_fit(400, 9);
  SmoothConfig cfg;
  cfg.bandwidth = 0.1;
  cfg.bootstrap_reps = 40;
  cfg.search = box1(-3, 3);
  cfg.alpha = 0.1;
  const auto point = fit_smoothed(f.prep, f.prior, cfg);
  CHECK(point.rule.sign == f.prior.rule.sign);
  const auto wide = perturb_bootstrap(f.prep, f.prior, point, cfg);
  cfg.alpha = 0.3;
  const auto narrow = perturb_bootstrap(f.prep, f.prior, point, cfg);
  CHECK(wide.ci[0].lo <= narrow.ci[0].lo);
  CHECK(narrow.ci[0].hi <= wide.ci[0].hi);
  CHECK(wide.ci[0].lo < wide.ci[0].hi);

  cfg.interval = CiMethod::percentile;
  const auto pct = perturb_bootstrap(f.prep, f.prior, point, cfg);
  CHECK(pct.replicates == narrow.replicates);
  CHECK(pct.interval == "percentile");
  cfg.interval = CiMethod::pivot;

  cfg.alpha = 0.1;
  cfg.threads = 3;
  const auto threaded = perturb_bootstrap(f.prep, f.prior, point, cfg);
  CHECK(threaded.replicates == wide.replicates);
  CHECK(threaded.ci[0].lo == wide.ci[0].lo);
  CHECK(threaded.ci[0].hi == wide.ci[0].hi);
}

TEST_CASE("cross-validated bandwidth comes from the grid", "[inference]") {
  const auto f = ex1_fit(400, 10);
  SmoothConfig cfg;
  cfg.search = box1(-3, 3);
  cfg.cv_grid = {0.05, 0.1, 0.2};
  for (auto loss : {CvLoss::smoothed, CvLoss::indicator}) {
    cfg.cv_loss = loss;
    const auto fit = fit_smoothed(f.prep, f.prior, cfg);
    CHECK(fit.cv_scores.size() == 3);
    CHECK(std::find(cfg.cv_grid.begin(), cfg.cv_grid.end(), fit.bandwidth) != cfg.cv_grid.end());
  }
  cfg.cv_grid.clear();
  const auto def = fit_smoothed(f.prep, f.prior, cfg);
  REQUIRE(def.cv_grid.size() == 4);
  CHECK_THAT(def.cv_grid[1], WithinAbs(2.0 * def.cv_grid[0], 1e-12));
}

TEST_CASE("smooth config problems", "[inference]") {
  SmoothConfig c;
  c.bandwidth = -1.0;
  c.folds = 1;
  c.alpha = 1.5;
  c.bootstrap_reps = 0;
  CHECK(smooth_config_problems(c).size() == 4);
}

TEST_CASE("m-out-of-n bootstrap", "[inference]") {
  CHECK(default_subsample_size(1000) == 100);
  CHECK(default_subsample_size(500) == 63);
  const auto s = generate_static({Example::ex1, 300, 13});
  const auto prior = fit_static(s.data, {0.5}, box1(-3, 3));
  SearchConfig sc = box1(-3, 3);
  sc.generations = 30;
  const auto rep = m_out_of_n_bootstrap(s.data, {0.5}, prior, sc, {}, 100, 20, 0.1, 7);
  CHECK(rep.replicates_used + rep.replicates_dropped == 20);
  CHECK(rep.ci[0].lo <= rep.ci[0].hi);
  const auto again = m_out_of_n_bootstrap(s.data, {0.5}, prior, sc, {}, 100, 20, 0.1, 7, 3);
  CHECK(again.replicates == rep.replicates);
  CHECK_THROWS_AS(m_out_of_n_bootstrap(s.data, {0.5}, prior, sc, {}, 301, 20, 0.1, 7), parameter_error);
  CHECK_THROWS_AS(m_out_of_n_bootstrap(s.data, {0.5}, prior, sc, {}, 1, 20, 0.1, 7), parameter_error);
}
