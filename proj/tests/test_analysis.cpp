#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "fmtree/analysis.hpp"
#include "fmtree/parser.hpp"
#include "oracles.hpp"

using namespace fmtree;

namespace {

// composite Simpson rule for smooth integrands; plenty for 1e-8 comparisons
template <class F>
double simpson(F f, double a, double b, int n = 2000) {
  double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("transient distribution matches the matrix exponential") {
  for (uint64_t seed = 1; seed <= 30; ++seed) {
    Ctmc c = oracle::random_chain(seed, 2, 50);
    for (double t : {0.1, 1.0, 10.0}) {
      std::vector<double> got = transient(c, t);
      std::vector<double> want = oracle::transient_expm(c, t);
      CAPTURE(seed, t);
      double sum = 0;
      for (uint32_t s = 0; s < c.n_states(); ++s) {
        REQUIRE(got[s] == Catch::Approx(want[s]).margin(1e-8));
        sum += got[s];
      }
      REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
    }
  }
}

TEST_CASE("cumulative residence matches the integrated exponential") {
  for (uint64_t seed = 40; seed < 60; ++seed) {
    Ctmc c = oracle::random_chain(seed, 2, 40);
    for (double t : {0.5, 5.0}) {
      std::vector<double> got = cumulative(c, t);
      std::vector<double> want = oracle::cumulative_expm(c, t);
      CAPTURE(seed, t);
      double sum = 0;
      for (uint32_t s = 0; s < c.n_states(); ++s) {
        REQUIRE(got[s] == Catch::Approx(want[s]).margin(1e-8));
        sum += got[s];
      }
      REQUIRE(sum == Catch::Approx(t).epsilon(1e-9));
    }
  }
}

TEST_CASE("bounded reachability reproduces closed forms") {
  // two states, one arrow: first passage is exponential
  Ctmc c;
  c.add_states(2);
  c.set_initial(0);
  c.add_transition(0u, 0u, 0.3, 1u);
  c.finalize();
  std::vector<uint8_t> target = {0, 1};
  for (double t : {0.1, 2.0, 9.0})
    REQUIRE(bounded_reach(c, target, t) == Catch::Approx(1.0 - std::exp(-0.3 * t)).margin(1e-12));

  // reaching the elapsed phase of a timing chain is an Erlang first passage
  for (auto [T, N] : std::vector<std::pair<double, uint32_t>>{{7, 3}, {182, 3}, {7300, 3}, {365, 30}}) {
    DelaySpec d;
    d.T = T;
    d.N = N;
    Ctmc delay = delay_module(d);
    std::vector<uint8_t> elapsed(delay.n_states(), 0);
    for (uint32_t s = 0; s < delay.n_states(); ++s)
      if (delay.has_label(s, "elapsed")) elapsed[s] = 1;
    for (double f : {0.5, 1.0, 2.0}) {
      double t = f * T;
      CAPTURE(T, N, t);
      REQUIRE(bounded_reach(delay, elapsed, t) ==
              Catch::Approx(erlang_cdf(t, N, N / T)).margin(1e-8));
    }
  }

  // frozen reference value for the 200-stage chain at its nominal horizon
  DelaySpec d;
  d.T = 7300;
  d.N = 200;
  Ctmc delay = delay_module(d);
  std::vector<uint8_t> elapsed(delay.n_states(), 0);
  for (uint32_t s = 0; s < delay.n_states(); ++s)
    if (delay.has_label(s, "elapsed")) elapsed[s] = 1;
  REQUIRE(bounded_reach(delay, elapsed, 7300.0) ==
          Catch::Approx(0.509403418007236325).margin(1e-8));
}

TEST_CASE("start-up collapse agrees with the exact fast transition") {
  DelaySpec d;
  d.T = 2.0;
  d.N = 2;
  Ctmc delay = delay_module(d);
  std::vector<uint8_t> elapsed(delay.n_states(), 0);
  for (uint32_t s = 0; s < delay.n_states(); ++s)
    if (delay.has_label(s, "elapsed")) elapsed[s] = 1;

  TransientOptions fast;  // collapse on by default
  TransientOptions exact;
  exact.collapse_fast_initial = false;

  double with = bounded_reach(delay, elapsed, 0.4, fast);
  double without = bounded_reach(delay, elapsed, 0.4, exact);
  // the exact run still pays the expected 1e-6 start-up lag
  REQUIRE(with == Catch::Approx(without).margin(3e-6));
  REQUIRE(with == Catch::Approx(erlang_cdf(0.4, 2, 1.0)).margin(1e-10));
}

TEST_CASE("bare degradation metrics follow the closed-form law") {
  FmtModel m = parse(
      "toplevel e;\n"
      "e ebe levels=3 tdeg=90;\n"
      "costs opday=2 failday=10 repair=100 replace=5000;\n");
  CompiledModel cm = compile(m, m.costs);
  const double lam = 3.0 / 90.0;
  auto F = [&](double u) { return erlang_cdf(u, 3, lam); };

  double prev_rel = 1.0, prev_fail = 0.0;
  for (double t : {10.0, 45.0, 90.0, 250.0}) {
    CAPTURE(t);
    double rel = reliability(cm, t);
    REQUIRE(rel == Catch::Approx(1.0 - F(t)).margin(1e-9));
    // the failed state is absorbing here, so expected failures equal the
    // failure probability
    double ef = expected_failures(cm, t);
    REQUIRE(ef == Catch::Approx(F(t)).margin(1e-9));
    REQUIRE(rel <= prev_rel + 1e-12);
    REQUIRE(ef >= prev_fail - 1e-12);
    prev_rel = rel;
    prev_fail = ef;

    double downtime = simpson(F, 0.0, t);
    REQUIRE(availability(cm, t) == Catch::Approx(1.0 - downtime / t).margin(1e-8));
    REQUIRE(expected_cost(cm, t) == Catch::Approx(2.0 * t + 10.0 * downtime).epsilon(1e-6));
  }

  REQUIRE(reliability(cm, 0.0) == 1.0);
  REQUIRE(availability(cm, 0.0) == 1.0);
  REQUIRE(expected_failures(cm, 0.0) == 0.0);
  REQUIRE(expected_cost(cm, 0.0) == 0.0);
  std::vector<double> pi0 = transient(cm.chain, 0.0);
  REQUIRE(pi0[cm.chain.initial()] == 1.0);
}

TEST_CASE("maintained model metrics are internally consistent") {
  FmtModel m = parse(
      "toplevel e;\n"
      "e ebe levels=2 tdeg=100 tclean=2 treplace=8;\n"
      "policy trep=30 toh=120 tinsp=off stages=1;\n"
      "costs repair=100 replace=5000 opday=0 failday=0;\n");
  CompileOptions co;
  co.mu = 1e3;  // keep the start-up rate inside what the dense oracle handles
  CompiledModel cm = compile(m, m.costs, co);

  // differential check of the reward integrals on the real compiled chain
  for (double t : {50.0, 200.0}) {
    std::vector<double> got = cumulative(cm.chain, t);
    std::vector<double> want = oracle::cumulative_expm(cm.chain, t);
    for (uint32_t s = 0; s < cm.chain.n_states(); ++s) {
      CAPTURE(t, s);
      REQUIRE(got[s] == Catch::Approx(want[s]).margin(1e-8));
    }
  }

  for (double t : {50.0, 200.0, 800.0}) {
    CAPTURE(t);
    double r = reliability(cm, t);
    double a = availability(cm, t);
    double f = expected_failures(cm, t);
    REQUIRE(a >= r - 1e-12);            // uptime includes repaired intervals
    REQUIRE(f >= (1.0 - r) - 1e-9);     // at least one failure whenever unreliable
    REQUIRE(expected_cost(cm, t) > 0);  // repairs happen and are billed
  }
  double c1 = expected_cost(cm, 200.0), c2 = expected_cost(cm, 800.0);
  REQUIRE(c2 > c1);

  // repairs make the maintained system strictly more reliable
  FmtModel bare = m;
  bare.policy = MaintenancePolicy{};
  CompiledModel free_run = compile(bare, bare.costs);
  REQUIRE(reliability(cm, 800.0) > reliability(free_run, 800.0));
}

TEST_CASE("equivalent failure rate inverts the exponential law") {
  REQUIRE(equivalent_failure_rate(-std::expm1(-3.0), 1.0) == Catch::Approx(3.0).epsilon(1e-12));

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> de_dist(1e-6, 0.999);
  std::uniform_real_distribution<double> t_dist(1.0, 1e4);
  for (int i = 0; i < 20; ++i) {
    double de = de_dist(rng);
    double t = t_dist(rng);
    double lam = equivalent_failure_rate(de, t);
    CAPTURE(de, t);
    REQUIRE(-std::expm1(-lam * t) == Catch::Approx(de).epsilon(1e-12));
    // the mean time to failure is preserved independently of staging
    REQUIRE(1.0 / lam == Catch::Approx(t / -std::log1p(-de)).epsilon(1e-12));
  }

  REQUIRE(equivalent_failure_rate(0.0, 5.0) == 0.0);
  REQUIRE_THROWS_AS(equivalent_failure_rate(1.0, 5.0), std::invalid_argument);
  REQUIRE_THROWS_AS(equivalent_failure_rate(-0.1, 5.0), std::invalid_argument);
  REQUIRE_THROWS_AS(equivalent_failure_rate(0.5, 0.0), std::invalid_argument);
}

TEST_CASE("metric dispatch names and records") {
  FmtModel m = parse(
      "toplevel e;\n"
      "e ebe levels=2 tdeg=50;\n");
  CompiledModel cm = compile(m, m.costs);
  MetricResult r = compute_metric(cm, Metric::kReliability, 25.0);
  REQUIRE(r.value == Catch::Approx(reliability(cm, 25.0)).margin(1e-14));
  REQUIRE(r.states == cm.chain.n_states());
  REQUIRE(r.horizon == 25.0);
  REQUIRE(std::string(metric_name(Metric::kExpectedCost)) == "expected_cost");
  REQUIRE(metric_from_name("availability") == Metric::kAvailability);
  REQUIRE_THROWS_AS(metric_from_name("mttf"), std::invalid_argument);
}
