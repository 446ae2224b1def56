#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace qdr;
using Catch::Matchers::WithinAbs;

namespace {

StaticRecord rec(double x, int a, double y, int delta) {
  StaticRecord r;
  r.x = {x, 1.0};
  r.a = a;
  r.y = y;
  r.delta = delta;
  return r;
}

}  // namespace

TEST_CASE("KM hand case: one event after one censoring", "[survival][km]") {
  // Event at 1 (risk 3), censored at 2, event at 3 (risk 1).
  const auto s = kaplan_meier({1, 2, 3}, {1, 0, 1});
  CHECK(s(0.5) == 1.0);
  CHECK_THAT(s(1.0), WithinAbs(2.0 / 3.0, 1e-12));
  CHECK_THAT(s(2.5), WithinAbs(2.0 / 3.0, 1e-12));
  CHECK(s(3.0) == 0.0);
  CHECK_THAT(s.left_limit(3.0), WithinAbs(2.0 / 3.0, 1e-12));
  CHECK(s.left_limit(1.0) == 1.0);
}

TEST_CASE("censoring KM of Y=(1,2,3), delta=(1,0,1)", "[survival][km]") {
  const StaticDataset ds({rec(0.1, 0, 1, 1), rec(0.2, 1, 2, 0), rec(0.3, 0, 3, 1)}, 0.5);
  const auto g = km_censoring(ds);
  CHECK(g(1.0) == 1.0);
  CHECK(g(1.999) == 1.0);
  CHECK_THAT(g(2.0), WithinAbs(0.5, 1e-12));  // censored at 2 with 2 at risk
  CHECK_THAT(g(3.0), WithinAbs(0.5, 1e-12));
  CHECK(g.left_limit(2.0) == 1.0);
  REQUIRE(g.jump_times() == std::vector<double>{2.0});
}

TEST_CASE("censoring KM of a single censored record", "[survival][km]") {
  const auto g = kaplan_meier({5.0}, {1});
  CHECK(g(4.9) == 1.0);
  CHECK(g(5.0) == 0.0);
}

TEST_CASE("KM ties: non-events at an event time stay in the risk set", "[survival][km]") {
  // Two records at t=1: one event, one non-event. Risk set at 1 is all 4.
  const auto s = kaplan_meier({1, 1, 2, 3}, {1, 0, 1, 0});
  CHECK_THAT(s(1.0), WithinAbs(0.75, 1e-12));
  CHECK_THAT(s(2.0), WithinAbs(0.75 * 0.5, 1e-12));
  CHECK_THAT(s(3.0), WithinAbs(0.375, 1e-12));
  // Tied events are one factor.
  const auto t = kaplan_meier({1, 1, 2}, {1, 1, 0});
  CHECK_THAT(t(1.0), WithinAbs(1.0 / 3.0, 1e-12));
}

TEST_CASE("KM agrees with an independent product-limit computation", "[survival][km]") {
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<double> t(n);
    std::vector<int> e(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<double>(1 + rng.below(10));  // heavy ties
      e[i] = rng.bernoulli(0.6) ? 1 : 0;
    }
    const auto s = kaplan_meier(t, e);
    for (double q = 0.5; q <= 11.0; q += 0.5) {
      double expect = 1.0;
      for (int u = 1; u <= 10; ++u) {
        if (u > q) break;
        double risk = 0, d = 0;
        for (std::size_t i = 0; i < n; ++i) {
          risk += t[i] >= u;
          d += t[i] == u && e[i] == 1;
        }
        if (d > 0) expect *= 1.0 - d / risk;
      }
      CHECK_THAT(s(q), WithinAbs(expect, 1e-12));
    }
  }
}

TEST_CASE("survival curve rejects malformed input", "[survival]") {
  CHECK_THROWS_AS(SurvivalCurve({1.0, 1.0}, {0.5, 0.4}), parameter_error);
  CHECK_THROWS_AS(SurvivalCurve({1.0, 2.0}, {0.5, 0.6}), parameter_error);
  CHECK_THROWS_AS(kaplan_meier({1.0}, {1, 0}), parameter_error);
}

// Arm 1: (x, y, delta) = (0.1,1,0) (0.2,2,1) (0.35,3,0) (0.5,4,0) (0.6,5,1);
// values from a direct evaluation of the product formula, h = 0.1.
TEST_CASE("local KM matches the literal kernel-weighted product", "[survival][local_km]") {
  const StaticDataset ds({rec(0.1, 1, 1.0, 0), rec(0.2, 1, 2.0, 1), rec(0.9, 0, 1.5, 1), rec(0.35, 1, 3.0, 0),
                          rec(0.5, 1, 4.0, 0), rec(0.6, 1, 5.0, 1), rec(0.8, 0, 2.5, 0)},
                         0.5);
  const LocalKaplanMeier km(ds, 1, 0, KernelSpec{KernelSpec::Kind::gaussian_density, 0.1});
  CHECK(km.arm_size() == 5);
  CHECK(km.members() == std::vector<std::size_t>{0, 1, 3, 4, 5});
  CHECK_THAT(km(3.5, 0.3), WithinAbs(0.13144790633007342, 1e-12));
  CHECK_THAT(km(4.5, 0.3), WithinAbs(0.00997139894180227, 1e-12));
  CHECK(km(0.5, 0.3) == 1.0);
  CHECK_THAT(km(10.0, 0.45), WithinAbs(0.1787915220565411, 1e-12));

  const std::vector<double> right{0.3942355879985878, 0.687778211320738, 0.26250896989009426, 0.31401782278963797,
                                  0.6058875354861508};
  const std::vector<double> left{1.0, 0.687778211320738, 0.974707880631662, 0.8317456866018573, 0.6058875354861508};
  const auto r = km.at_members(false);
  const auto l = km.at_members(true);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK_THAT(r[i], WithinAbs(right[i], 1e-12));
    CHECK_THAT(l[i], WithinAbs(left[i], 1e-12));
  }
}

TEST_CASE("local KM with uniform kernel weights reduces to the arm's KM", "[survival][local_km]") {
  Rng rng(21);
  for (int k = 0; k < 20; ++k) {
    std::vector<StaticRecord> rs;
    for (int i = 0; i < 60; ++i) {
      const int a = i % 2;
      // Integer times produce ties between censorings and events.
      rs.push_back(rec(0.25, a, static_cast<double>(1 + rng.below(15)), rng.bernoulli(0.5) ? 1 : 0));
    }
    rs.front().delta = 1;
    const StaticDataset ds(rs, 0.5);
    for (int arm = 0; arm < 2; ++arm) {
      const LocalKaplanMeier lkm(ds, arm, 0, KernelSpec{KernelSpec::Kind::gaussian_density, 0.3});
      std::vector<double> t;
      std::vector<int> c;
      for (const auto& r : ds.records())
        if (r.a == arm) {
          t.push_back(r.y);
          c.push_back(1 - r.delta);
        }
      const auto km = kaplan_meier(t, c);
      for (double q = 0.5; q <= 16.0; q += 0.5) {
        CHECK_THAT(lkm(q, 0.25), WithinAbs(km(q), 1e-12));
        CHECK_THAT(lkm.left_limit(q, 0.25), WithinAbs(km.left_limit(q), 1e-12));
      }
      const auto at = lkm.at_members(false);
      for (std::size_t m = 0; m < at.size(); ++m) CHECK_THAT(at[m], WithinAbs(km(ds[lkm.members()[m]].y), 1e-12));
    }
  }
}

TEST_CASE("local KM grid mode interpolates the exact evaluation closely", "[survival][local_km]") {
  const auto s = generate_static({Example::ex1, 1500, 8});
  LocalKmOptions exact, grid;
  exact.exact_limit = 100000;
  grid.exact_limit = 10;
  grid.grid_points = 401;
  const KernelSpec k{KernelSpec::Kind::gaussian_density, 0.1};
  const LocalKaplanMeier a(s.data, 1, 0, k, exact), b(s.data, 1, 0, k, grid);
  const auto va = a.at_members(false), vb = b.at_members(false);
  double worst = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) worst = std::max(worst, std::abs(va[i] - vb[i]));
  CHECK(worst < 0.02);
}

TEST_CASE("local KM parameter checks", "[survival][local_km]") {
  const StaticDataset ds({rec(0.1, 1, 1.0, 1), rec(0.2, 1, 2.0, 0), rec(0.3, 0, 3.0, 1)}, 0.5);
  CHECK_THROWS_AS(LocalKaplanMeier(ds, 1, 0, KernelSpec{KernelSpec::Kind::gaussian_density, 0.0}), parameter_error);
  CHECK_THROWS_AS(LocalKaplanMeier(ds, 1, 5, KernelSpec{}), parameter_error);
  CHECK_THROWS_AS(LocalKaplanMeier(ds, 0, 0, KernelSpec{}), data_error);  // one record in arm 0
  CHECK_THROWS_AS(LocalKaplanMeier(ds, 2, 0, KernelSpec{}), parameter_error);
}

TEST_CASE("kernels", "[survival]") {
  const KernelSpec dens{KernelSpec::Kind::gaussian_density, 1.0};
  const KernelSpec cdf{KernelSpec::Kind::normal_cdf, 1.0};
  CHECK_THAT(dens(0.0), WithinAbs(0.3989422804014327, 1e-15));
  CHECK_THAT(cdf(0.0), WithinAbs(0.5, 1e-15));
  CHECK_THAT(cdf(1.0), WithinAbs(0.8413447460685429, 1e-15));
}
