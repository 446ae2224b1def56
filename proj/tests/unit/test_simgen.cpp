#include <catch_amalgamated.hpp>

#include <cmath>

#include "support.hpp"

using namespace qdr;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

TEST_CASE("static latents are consistent with the observed data", "[simgen][property]") {
  for (auto ex : {Example::ex1, Example::ex2}) {
    GeneratorSpec g{ex, 100000, 77};
    g.keep_latents = true;
    const auto s = generate_static(g);
    REQUIRE(s.latents.size() == s.data.size());
    std::size_t bad = 0;
    for (std::size_t i = 0; i < s.data.size(); ++i) {
      const auto& r = s.data[i];
      const auto& l = s.latents[i];
      bad += l.t != (r.a == 1 ? l.t1 : l.t0);
      bad += r.y != std::min(l.t, l.c);
      bad += r.delta != (l.t <= l.c ? 1 : 0);
    }
    CHECK(bad == 0);
  }
}

TEST_CASE("two-stage latents are consistent with the observed data", "[simgen][property]") {
  for (auto ex : {Example::ex3a, Example::ex3b, Example::ex3c}) {
    GeneratorSpec g{ex, 100000, 78};
    g.keep_latents = true;
    const auto s = generate_dynamic(g);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < s.data.size(); ++i) {
      const auto& r = s.data[i];
      const auto& l = s.latents[i];
      bad += l.t != l.draw.potential(r.d1, l.draw.d2);
      bad += r.y != std::min(l.t, l.draw.c);
      bad += r.delta != (l.t <= l.draw.c ? 1 : 0);
      bad += r.z != (std::min(l.draw.t1[r.d1], l.draw.c) > s.data.s() ? 1 : 0);
      if (r.z == 1) bad += r.x2[0] != l.draw.x2[r.d1];
    }
    CHECK(bad == 0);
  }
}

TEST_CASE("generators are deterministic in the seed", "[simgen]") {
  const auto a = generate_static({Example::ex2, 500, 3});
  const auto b = generate_static({Example::ex2, 500, 3});
  const auto c = generate_static({Example::ex2, 500, 4});
  bool same = true, differ = false;
  for (std::size_t i = 0; i < 500; ++i) {
    same = same && a.data[i].y == b.data[i].y && a.data[i].x == b.data[i].x && a.data[i].a == b.data[i].a;
    differ = differ || a.data[i].y != c.data[i].y;
  }
  CHECK(same);
  CHECK(differ);
  // Stream for draw i does not depend on n.
  const auto shorter = generate_static({Example::ex2, 100, 3});
  for (std::size_t i = 0; i < 100; ++i) CHECK(shorter.data[i].y == a.data[i].y);
}

TEST_CASE("generated censoring rates", "[simgen]") {
  CHECK_THAT(generate_static({Example::ex1, 100000, 1}).data.censoring_rate(), WithinAbs(0.376, 0.01));
  CHECK_THAT(generate_static({Example::ex2, 100000, 1}).data.censoring_rate(), WithinAbs(0.30, 0.01));
  for (auto ex : {Example::ex3a, Example::ex3b, Example::ex3c})
    for (double target : {0.15, 0.40}) {
      GeneratorSpec g{ex, 100000, 2};
      g.target_censoring = target;
      CHECK_THAT(generate_dynamic(g).data.censoring_rate(), WithinAbs(target, 0.006));
    }
}

TEST_CASE("C0 calibration inverts the censoring rate", "[simgen]") {
  const double c0 = calibrate_c0(Example::ex3a, 0.40, 20000, 7, 0.002);
  CHECK_THAT(ex3_censoring_rate(Example::ex3a, c0, 20000, 7), WithinAbs(0.40, 0.003));
  CHECK_THROWS_AS(default_c0(Example::ex3a, 0.2), parameter_error);
}

TEST_CASE("generator spec problems", "[simgen]") {
  GeneratorSpec g{Example::ex1, 100, 1};
  g.target_censoring = 0.15;
  CHECK_THROWS_WITH(generate_static(g), ContainsSubstring("ex3"));
  GeneratorSpec d{Example::ex3a, 100, 1};
  d.target_censoring = 0.2;
  CHECK_THROWS_AS(generate_dynamic(d), parameter_error);
  CHECK_THROWS_AS(generate_dynamic({Example::ex1, 100, 1}), parameter_error);
  CHECK_THROWS_AS(generate_static({Example::ex3a, 100, 1}), parameter_error);
  CHECK_THROWS_WITH(parse_example("ex4"), ContainsSubstring("unknown example"));
  CHECK(parse_example("ex3b") == Example::ex3b);
  CHECK(to_string(Example::ex3c) == "ex3c");
}

TEST_CASE("ranked quantiles equal direct selection", "[simgen][property]") {
  const auto pop = static_population(Example::ex2, 20000, 9);
  Rng rng(4);
  for (int k = 0; k < 40; ++k) {
    const int sign = rng.bernoulli(0.5) ? 1 : -1;
    const std::vector<double> tail{rng.uniform(-2, 2), rng.uniform(-2, 2)};
    const double tau = rng.uniform(0.05, 0.95);
    const std::size_t n_use = 1000 + rng.below(19000);
    CHECK(pop.value(sign, tail, tau, n_use) == pop.value_direct(sign, tail, tau, n_use));
  }
  const auto dpop = dynamic_population(Example::ex3b, 20000, 10);
  for (int k = 0; k < 40; ++k) {
    const int s1 = rng.bernoulli(0.5) ? 1 : -1, s2 = rng.bernoulli(0.5) ? 1 : -1;
    const double b = rng.uniform(-4, 4), z = rng.uniform(-4, 4), tau = rng.uniform(0.05, 0.95);
    CHECK(dpop.value(s1, b, s2, z, tau, 20000) == dpop.value_direct(s1, b, s2, z, tau, 20000));
  }
}

TEST_CASE("truth oracle on a small population is thread invariant", "[simgen]") {
  TruthRequest req;
  req.example = Example::ex1;
  req.tau = 0.5;
  req.n_mc = 50000;
  req.grid = TruthGrid{0.01, 0.01, 0, 1};
  const auto a = truth_oracle(req);
  req.threads = 3;
  const auto b = truth_oracle(req);
  CHECK(a.signs == b.signs);
  CHECK(a.params == b.params);
  CHECK(a.value == b.value);
  CHECK(a.signs == std::vector<int>{1});
  CHECK(std::abs(a.params[0] + 0.552) < 0.1);
  CHECK(std::abs(a.value - 2.258) < 0.05);
}

TEST_CASE("published truths", "[simgen]") {
  const auto t = published_truth(Example::ex2, 0.25);
  CHECK(t.sign == -1);
  CHECK(t.tail == std::vector<double>{1.140, -0.825});
  CHECK(published_truth(Example::ex3b, 0.3).tail2 == std::vector<double>{2.0});
  CHECK_THROWS_AS(published_truth(Example::ex1, 0.3), parameter_error);
}

TEST_CASE("Monte Carlo experiment rows are thread invariant and seeded per replication", "[simgen]") {
  ExperimentSpec es;
  es.example = Example::ex1;
  es.n = 200;
  es.reps = 4;
  es.truth = published_truth(Example::ex1, 0.5);
  es.search.lower = {-3};
  es.search.upper = {3};
  es.search.generations = 30;
  const auto a = mc_experiment(es);
  es.threads = 2;
  const auto b = mc_experiment(es);
  REQUIRE(a.rows.size() == 4);
  for (std::size_t r = 0; r < 4; ++r) {
    CHECK(a.rows[r].seed == derive_seed(1, 1, r));
    CHECK(a.rows[r].tail == b.rows[r].tail);
    CHECK(a.rows[r].value == b.rows[r].value);
  }
  CHECK(a.summary.bias == b.summary.bias);
  es.reps = 2;
  const auto prefix = mc_experiment(es);
  CHECK(prefix.rows[1].tail == a.rows[1].tail);
}

TEST_CASE("summary statistics", "[simgen]") {
  Truth t{1, {0.0}, 1.0, -1, {}};
  std::vector<ReplicationRow> rows(3);
  rows[0].sign = 1;
  rows[0].tail = {0.1};
  rows[0].value = 1.5;
  rows[1].sign = 1;
  rows[1].tail = {-0.1};
  rows[1].value = 0.5;
  rows[2].sign = -1;  // wrong sign: excluded from coefficient stats
  rows[2].tail = {5.0};
  rows[2].value = 1.0;
  const auto s = summarize(rows, t);
  CHECK_THAT(s.bias[0], WithinAbs(0.0, 1e-15));
  CHECK_THAT(s.rmse[0], WithinAbs(0.1, 1e-15));
  CHECK(s.correct_sign_runs == 2);
  CHECK_THAT(s.sign_error_rate, WithinAbs(1.0 / 3.0, 1e-15));
  CHECK_THAT(s.bias_q, WithinAbs(0.0, 1e-15));
}
