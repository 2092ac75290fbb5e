#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdlib>

#include "fmtree/analysis.hpp"
#include "fmtree/parser.hpp"
#include "fmtree/simulation.hpp"

using namespace fmtree;

namespace {

SimConfig erlang_cfg(uint64_t runs, double horizon, uint64_t seed) {
  SimConfig c;
  c.runs = runs;
  c.horizon = horizon;
  c.seed = seed;
  c.erlang_mode = true;
  return c;
}

}  // namespace

// hand-traced schedule: degradations at 50,111,171,231,291,351 and a cleaning
// exactly one day after each check that finds wear, so the leaf never reaches
// its failed level inside the year
TEST_CASE("deterministic trajectory follows the calendar exactly") {
  FmtModel m = parse(R"(
toplevel top;
top or e;
e ebe levels=2 tdeg=100 tclean=1 treplace=5;
policy trep=30;
costs repair=120 replace=9000 opday=2 failday=50;
)");
  SimConfig cfg;
  cfg.horizon = 365;
  cfg.runs = 5000;  // collapses to one: nothing is random
  SimResult r = simulate(m, cfg);

  CHECK(r.runs == 1);
  CHECK(r.reliability.mean == 1.0);
  CHECK(r.availability.mean == 1.0);
  CHECK(r.expected_failures.mean == 0.0);
  CHECK(r.expected_cost.mean == Catch::Approx(365.0 * 2 + 6 * 120.0).margin(1e-9));
  CHECK(r.reliability.half_width == 0.0);
}

// overhauls only: the leaf fails at 80,190,290 and is replaced at 110,210,310,
// so the year holds three failures and seventy days of downtime
TEST_CASE("deterministic overhaul cycle accumulates downtime and failures") {
  FmtModel m = parse(R"(
toplevel top;
top or e;
e ebe levels=2 tdeg=80 tclean=1 treplace=10;
policy toh=100;
costs repair=0 replace=400 opday=1 failday=10;
)");
  SimConfig cfg;
  cfg.horizon = 365;
  SimResult r = simulate(m, cfg);

  CHECK(r.reliability.mean == 0.0);
  CHECK(r.expected_failures.mean == 3.0);
  CHECK(r.availability.mean == Catch::Approx(1.0 - 70.0 / 365.0).margin(1e-12));
  CHECK(r.expected_cost.mean == Catch::Approx(365.0 + 10 * 70.0 + 400.0 * 3).margin(1e-9));
}

TEST_CASE("deterministic inspection repairs wear before failure") {
  FmtModel m = parse(R"(
toplevel top;
top or e;
e ebe levels=3 tdeg=90 tclean=5 treplace=20;
policy tinsp=25;
costs repair=70 replace=0 opday=0 failday=0;
)");
  SimConfig cfg;
  cfg.horizon = 150;
  SimResult r = simulate(m, cfg);

  // inspections at 50 and 100 each catch one worn stage; 25, 75 and 125 see
  // a fresh component and stand down
  CHECK(r.expected_failures.mean == 0.0);
  CHECK(r.availability.mean == 1.0);
  CHECK(r.expected_cost.mean == Catch::Approx(140.0).margin(1e-9));
}

TEST_CASE("unmaintained deterministic leaf fails exactly at its total delay") {
  FmtModel m = parse(R"(
toplevel top;
top or e;
e ebe levels=4 tdeg=200;
)");
  SimConfig cfg;
  cfg.horizon = 150;
  SimResult r = simulate(m, cfg);
  CHECK(r.reliability.mean == 1.0);
  CHECK(r.expected_failures.mean == 0.0);

  cfg.horizon = 500;
  r = simulate(m, cfg);
  CHECK(r.reliability.mean == 0.0);
  CHECK(r.expected_failures.mean == 1.0);
  CHECK(r.availability.mean == Catch::Approx(1.0 - 300.0 / 500.0).margin(1e-12));
}

TEST_CASE("erlang mode reproduces the exponential failure law") {
  FmtModel m = parse(R"(
toplevel top;
top or e;
e ebe levels=1 tdeg=400;
)");
  const double t = 300;
  SimResult r = simulate(m, erlang_cfg(40000, t, 20260819));
  const double exact = std::exp(-t / 400.0);
  CHECK(std::abs(r.reliability.mean - exact) <= r.reliability.half_width);
  // one shot at failing: the failure count is the unreliability indicator
  CHECK(r.expected_failures.mean == Catch::Approx(1.0 - r.reliability.mean).margin(1e-12));
}

TEST_CASE("same seed gives identical estimates, other seeds move them") {
  FmtModel m = parse(R"(
toplevel top;
top or a b;
a ebe levels=2 tdeg=300;
b ebe levels=3 tdeg=500;
)");
  SimResult r1 = simulate(m, erlang_cfg(500, 365, 7));
  SimResult r2 = simulate(m, erlang_cfg(500, 365, 7));
  CHECK(r1.reliability.mean == r2.reliability.mean);
  CHECK(r1.availability.mean == r2.availability.mean);
  CHECK(r1.expected_cost.mean == r2.expected_cost.mean);
  CHECK(r1.expected_failures.mean == r2.expected_failures.mean);
  CHECK(r1.reliability.stddev == r2.reliability.stddev);

  SimResult r3 = simulate(m, erlang_cfg(500, 365, 8));
  CHECK(r1.availability.mean != r3.availability.mean);
}

TEST_CASE("thread count does not change the estimates") {
  FmtModel m = parse(R"(
toplevel top;
top or a b;
a ebe levels=2 tdeg=300;
b ebe levels=1 tdeg=700;
)");
  setenv("FMTREE_THREADS", "1", 1);
  SimResult r1 = simulate(m, erlang_cfg(600, 365, 99));
  setenv("FMTREE_THREADS", "4", 1);
  SimResult r4 = simulate(m, erlang_cfg(600, 365, 99));
  unsetenv("FMTREE_THREADS");
  CHECK(r1.reliability.mean == r4.reliability.mean);
  CHECK(r1.expected_cost.mean == r4.expected_cost.mean);
  CHECK(r1.expected_cost.stddev == r4.expected_cost.stddev);
}

TEST_CASE("confidence interval shrinks with the run count") {
  FmtModel m = parse(R"(
toplevel top;
top or e;
e ebe levels=2 tdeg=260;
)");
  SimResult small = simulate(m, erlang_cfg(100, 365, 5));
  SimResult big = simulate(m, erlang_cfg(10000, 365, 5));
  CHECK(big.reliability.half_width < small.reliability.half_width);
  CHECK(big.availability.half_width < small.availability.half_width);
}

TEST_CASE("erlang simulation matches the numeric engine on a maintained model") {
  FmtModel m = parse(R"(
toplevel top;
top or a b;
a ebe levels=2 tdeg=300 tclean=2 treplace=10;
b ebe levels=3 tdeg=540 tclean=2 treplace=10;
policy trep=60 toh=400 tinsp=20 stages=2;
costs repair=80 replace=900 opday=1 failday=25;
)");
  const double t = 365;
  CompiledModel cm = compile(m, m.costs);
  SimResult r = simulate(m, erlang_cfg(30000, t, 424242));

  CHECK(std::abs(r.reliability.mean - reliability(cm, t)) <= r.reliability.half_width);
  CHECK(std::abs(r.availability.mean - availability(cm, t)) <= r.availability.half_width);
  CHECK(std::abs(r.expected_cost.mean - expected_cost(cm, t)) <= r.expected_cost.half_width);
  CHECK(std::abs(r.expected_failures.mean - expected_failures(cm, t)) <=
        r.expected_failures.half_width);
}

TEST_CASE("erlang simulation tracks dependency acceleration") {
  FmtModel m = parse(R"(
toplevel top;
top or e1 e2;
e1 ebe levels=1 tdeg=200;
e2 ebe levels=2 tdeg=400;
dep rdep e1 deps=e2 gamma=3;
)");
  const double t = 250;
  CompiledModel cm = compile(m, m.costs);
  SimResult r = simulate(m, erlang_cfg(30000, t, 1337));
  CHECK(std::abs(r.reliability.mean - reliability(cm, t)) <= r.reliability.half_width);
  CHECK(std::abs(r.availability.mean - availability(cm, t)) <= r.availability.half_width);
}

// the phase-type clocks converge on the deterministic schedule as the stage
// count grows; measured against the numeric engine so no sampling noise enters
TEST_CASE("erlang-to-deterministic gap falls as timer stages increase") {
  const char* tmpl = R"(
toplevel top;
top or e;
e ebe levels=40 tdeg=200 tclean=3 treplace=10;
policy trep=30 stages=%u;
costs repair=10 replace=100 opday=1 failday=5;
)";
  SimConfig cfg;
  cfg.horizon = 365;
  double prev = -1;
  std::vector<double> gaps;
  for (uint32_t stages : {1u, 3u, 10u, 30u}) {
    char text[512];
    std::snprintf(text, sizeof text, tmpl, stages);
    FmtModel m = parse(text);
    SimResult det = simulate(m, cfg);
    CompiledModel cm = compile(m, m.costs);
    gaps.push_back(std::abs(availability(cm, cfg.horizon) - det.availability.mean));
  }
  for (size_t i = 1; i < gaps.size(); ++i) CHECK(gaps[i] < gaps[i - 1]);
  (void)prev;
}

TEST_CASE("simulate rejects degenerate configurations") {
  FmtModel m = parse(R"(
toplevel top;
top or e;
e ebe levels=1 tdeg=100;
)");
  SimConfig cfg;
  cfg.runs = 0;
  CHECK_THROWS_AS(simulate(m, cfg), std::invalid_argument);
  cfg.runs = 10;
  cfg.horizon = 0;
  CHECK_THROWS_AS(simulate(m, cfg), std::invalid_argument);
  cfg.horizon = 10;
  cfg.confidence = 1.0;
  CHECK_THROWS_AS(simulate(m, cfg), std::invalid_argument);
}
