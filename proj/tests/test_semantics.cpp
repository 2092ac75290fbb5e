#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fmtree/parser.hpp"
#include "fmtree/semantics.hpp"
#include "oracles.hpp"

using namespace fmtree;

namespace {

double failed_prob(const CompiledModel& cm, double t) {
  std::vector<double> pi = oracle::transient_expm(cm.chain, t);
  double p = 0;
  for (uint32_t s = 0; s < cm.chain.n_states(); ++s)
    if (cm.failed[s]) p += pi[s];
  return p;
}

std::multiset<std::tuple<uint32_t, std::string, double, uint32_t>> rows(const Ctmc& c) {
  std::multiset<std::tuple<uint32_t, std::string, double, uint32_t>> out;
  for (const auto& t : c.all_transitions())
    out.insert({t.src, std::string(c.action_name(t.action)), t.rate, t.dst});
  return out;
}

}  // namespace

TEST_CASE("leaf chain has the expected matrix shape") {
  EbeSpec e;
  e.id = "pump";
  e.levels = 3;
  ElementCtmc el = ebe_ctmc(e);
  const Ctmc& c = el.ctmc;
  REQUIRE(c.n_states() == 4);
  REQUIRE(c.initial() == 0);

  auto got = rows(c);
  std::multiset<std::tuple<uint32_t, std::string, double, uint32_t>> want = {
      {0, "degrade_1", 1.0, 1}, {1, "degrade_2", 1.0, 2},     {2, "degrade_3", 1.0, 3},
      {1, "perform_clean", 1.0, 0}, {1, "perform_replace", 1.0, 0},
      {2, "perform_clean", 1.0, 1}, {2, "perform_replace", 1.0, 0},
      {3, "perform_clean", 1.0, 2}, {3, "perform_replace", 1.0, 0},
  };
  REQUIRE(got == want);

  // cleaning and replacement out of s_1 share a target; aggregate rate is 2
  REQUIRE(c.rate(1, 0) == 2.0);

  REQUIRE(c.has_label(0, "new"));
  REQUIRE(c.has_label(1, "thresh"));
  REQUIRE(c.has_label(2, "thresh"));
  REQUIRE(c.has_label(3, "failed"));
  REQUIRE(!c.has_label(3, "new"));

  EbeSpec tiny;
  tiny.id = "t";
  tiny.levels = 1;
  ElementCtmc el1 = ebe_ctmc(tiny);
  REQUIRE(el1.ctmc.n_states() == 2);
  REQUIRE(el1.ctmc.find_ap("thresh") == -1);
}

TEST_CASE("repair module serialises pending work") {
  ElementCtmc el = rm_ctmc(MaintenancePolicy{});
  const Ctmc& c = el.ctmc;
  REQUIRE(c.n_states() == 3);
  REQUIRE(!c.has_label(0, "maintenance"));
  REQUIRE(c.has_label(1, "maintenance"));
  REQUIRE(c.has_label(2, "maintenance"));
  REQUIRE(el.guards.size() == 6);

  // checks are guarded on trig, inspections on thresh, both directions present
  auto g = [&](uint32_t s, const char* a, uint32_t d) {
    return el.guards.at({s, uint32_t(c.find_action(a)), d});
  };
  REQUIRE(g(0, "check_clean", 1) == Guard::kTrigIs1);
  REQUIRE(g(0, "check_clean", 0) == Guard::kTrigIs0);
  REQUIRE(g(0, "check_replace", 2) == Guard::kTrigIs1);
  REQUIRE(g(0, "check_replace", 0) == Guard::kTrigIs0);
  REQUIRE(g(0, "inspect", 1) == Guard::kThreshIs1);
  REQUIRE(g(0, "inspect", 0) == Guard::kThreshIs0);

  // pending states expose exactly their own start and completion
  auto got = rows(c);
  REQUIRE(got.count({1, "trigger_clean", 1.0, 1}) == 1);
  REQUIRE(got.count({1, "perform_clean", 1.0, 0}) == 1);
  REQUIRE(got.count({2, "trigger_replace", 1.0, 2}) == 1);
  REQUIRE(got.count({2, "perform_replace", 1.0, 0}) == 1);
  REQUIRE(got.count({1, "perform_replace", 1.0, 0}) == 0);
  REQUIRE(got.count({2, "perform_clean", 1.0, 0}) == 0);
}

TEST_CASE("inspection module raises and stands down") {
  ElementCtmc el = im_ctmc(MaintenancePolicy{});
  const Ctmc& c = el.ctmc;
  REQUIRE(c.n_states() == 2);
  REQUIRE(el.guards.size() == 2);
  auto got = rows(c);
  REQUIRE(got.count({0, "inspect", 1.0, 1}) == 1);
  REQUIRE(got.count({0, "inspect", 1.0, 0}) == 1);
  REQUIRE(got.count({1, "perform_clean", 1.0, 0}) == 1);
  REQUIRE(got.count({1, "perform_replace", 1.0, 0}) == 1);
}

TEST_CASE("guard signals agree with brute-force evaluation") {
  FmtModel m = parse(
      "toplevel top;\n"
      "top or e1 g2;\n"
      "g2 or e2 e3;\n"
      "r rdep e1 deps=e2 gamma=2;\n"
      "e1 ebe levels=2 tdeg=10;\n"
      "e2 ebe levels=2 tdeg=20;\n"
      "e3 ebe levels=2 tdeg=30;\n");
  const GateSpec& r = *m.gate("r");
  const EbeLabel all[3] = {EbeLabel::kNew, EbeLabel::kThresh, EbeLabel::kFailed};
  const char* ids[3] = {"e1", "e2", "e3"};

  for (int mask = 0; mask < 27; ++mask) {
    GuardContext ctx;
    EbeLabel l[3];
    int v = mask;
    for (int i = 0; i < 3; ++i, v /= 3) {
      l[i] = all[v % 3];
      ctx.labels[ids[i]] = l[i];
    }
    bool any_trig = false, any_thresh = false;
    for (int i = 0; i < 3; ++i) {
      any_trig |= l[i] != EbeLabel::kNew;
      any_thresh |= l[i] == EbeLabel::kThresh;
    }
    CAPTURE(mask);
    REQUIRE(guard_trig(ctx) == any_trig);
    REQUIRE(guard_thresh(ctx) == any_thresh);
    REQUIRE(guard_in(ctx, m, r) == (l[0] == EbeLabel::kFailed));
    REQUIRE(guard_fail(ctx, m, "top") ==
            (l[0] == EbeLabel::kFailed || l[1] == EbeLabel::kFailed || l[2] == EbeLabel::kFailed));
    REQUIRE(guard_fail(ctx, m, "g2") ==
            (l[1] == EbeLabel::kFailed || l[2] == EbeLabel::kFailed));
    REQUIRE(guard_fail(ctx, m, "e2") == (l[1] == EbeLabel::kFailed));

    std::vector<double> acc = guard_accel(ctx, m, r);
    REQUIRE(acc.size() == 1);
    REQUIRE(acc[0] == (l[0] == EbeLabel::kFailed ? 10.0 : 20.0));

    // an exempt leaf is invisible to trig/thresh but still fails the tree
    GuardContext ex = ctx;
    ex.exempt.insert("e3");
    bool trig2 = l[0] != EbeLabel::kNew || l[1] != EbeLabel::kNew;
    bool thresh2 = l[0] == EbeLabel::kThresh || l[1] == EbeLabel::kThresh;
    REQUIRE(guard_trig(ex) == trig2);
    REQUIRE(guard_thresh(ex) == thresh2);
    REQUIRE(guard_fail(ex, m, "top") ==
            (l[0] == EbeLabel::kFailed || l[1] == EbeLabel::kFailed || l[2] == EbeLabel::kFailed));
  }
}

TEST_CASE("maintenance-free leaf compiles to the exact degradation law") {
  FmtModel m = parse(
      "toplevel e;\n"
      "e ebe levels=4 tdeg=200;\n");
  CompiledModel cm = compile(m, m.costs);
  REQUIRE(cm.chain.n_states() == 5);
  REQUIRE(cm.stats.product_cardinality == 5);
  for (double t : {10.0, 50.0, 200.0, 800.0}) {
    double want = erlang_cdf(t, 4, 4.0 / 200.0);
    REQUIRE(failed_prob(cm, t) == Catch::Approx(want).margin(1e-10));
  }
  // only degradation actions appear
  for (const auto& tr : cm.chain.all_transitions())
    REQUIRE(std::string(cm.chain.action_name(tr.action)).rfind("degrade_", 0) == 0);
}

TEST_CASE("unfused compile exposes the full component product") {
  FmtModel m = parse(
      "toplevel e;\n"
      "e ebe levels=3 tdeg=7300 tclean=1 treplace=7;\n"
      "policy trep=182 toh=off tinsp=7 stages=3;\n");
  CompileOptions o;
  o.fuse_degradation = false;
  CompiledModel cm = compile(m, m.costs, o);
  // leaf skeleton, its timing chain, repair + inspection modules, cleaning
  // duration, repair timer, inspection timer
  std::vector<uint32_t> sizes = {4, 5, 3, 2, 4, 5, 5};
  REQUIRE(cm.stats.component_sizes == sizes);
  REQUIRE(cm.stats.product_cardinality == 4ull * 5 * 3 * 2 * 4 * 5 * 5);
  REQUIRE(cm.chain.n_states() < cm.stats.product_cardinality);
  REQUIRE(cm.chain.n_states() > 0);
}

TEST_CASE("fused and unfused compiles agree on the failure law") {
  FmtModel m = parse(
      "toplevel e;\n"
      "e ebe levels=2 tdeg=50 tclean=2 treplace=9;\n"
      "policy trep=20 toh=off tinsp=off stages=1;\n");
  CompileOptions fused, unfused;
  fused.mu = unfused.mu = 1e9;
  unfused.fuse_degradation = false;
  CompiledModel a = compile(m, m.costs, fused);
  CompiledModel b = compile(m, m.costs, unfused);
  REQUIRE(a.chain.n_states() < b.chain.n_states());
  for (double t : {5.0, 20.0, 60.0, 150.0}) {
    CAPTURE(t);
    REQUIRE(failed_prob(a, t) == Catch::Approx(failed_prob(b, t)).margin(1e-8));
  }
}

TEST_CASE("maintenance lowers the failure probability and is accounted") {
  FmtModel m = parse(
      "toplevel e;\n"
      "e ebe levels=2 tdeg=100 tclean=1 treplace=4;\n"
      "policy trep=30 toh=off tinsp=off stages=1;\n");
  CompiledModel maintained = compile(m, m.costs);

  FmtModel bare = m;
  bare.policy = MaintenancePolicy{};
  CompiledModel free_run = compile(bare, bare.costs);

  double with = failed_prob(maintained, 200.0);
  double without = failed_prob(free_run, 200.0);
  REQUIRE(with < without);
  REQUIRE(without == Catch::Approx(erlang_cdf(200.0, 2, 0.02)).margin(1e-10));

  double total_repair = 0;
  for (double r : maintained.repair_event_rate) total_repair += r;
  REQUIRE(total_repair > 0);
  double total_replace = 0;
  for (double r : maintained.replace_event_rate) total_replace += r;
  REQUIRE(total_replace == 0.0);  // no overhaul configured

  // with an active repair path the chain never deadlocks
  for (uint32_t s = 0; s < maintained.chain.n_states(); ++s)
    REQUIRE(maintained.chain.exit_rate(s) > 0);
}

TEST_CASE("cleaning and replacement can never race") {
  FmtModel m = parse(
      "toplevel top;\n"
      "top or a b;\n"
      "a ebe levels=2 tdeg=40 tclean=1 treplace=3;\n"
      "b ebe levels=3 tdeg=90 tclean=2 treplace=5;\n"
      "policy trep=15 toh=60 tinsp=5 stages=1;\n");
  CompiledModel cm = compile(m, m.costs);
  int64_t pc = cm.chain.find_action("perform_clean");
  int64_t pr = cm.chain.find_action("perform_replace");
  REQUIRE(pc >= 0);
  REQUIRE(pr >= 0);
  uint32_t both = 0;
  for (uint32_t s = 0; s < cm.chain.n_states(); ++s) {
    bool clean = false, replace = false;
    for (const auto& t : cm.chain.transitions(s)) {
      clean |= int64_t(t.action) == pc;
      replace |= int64_t(t.action) == pr;
    }
    if (clean && replace) ++both;
    REQUIRE(cm.chain.exit_rate(s) > 0);
  }
  REQUIRE(both == 0);

  // every synchronised label stays inside the action alphabet
  const std::set<std::string> alphabet = {
      "trigger",       "perform_clean",   "perform_replace", "inspect",
      "check_clean",   "check_replace",   "trigger_clean",   "trigger_replace"};
  for (const std::string& a : cm.chain.act()) {
    bool degrade = a.rfind("degrade_", 0) == 0;
    CAPTURE(a);
    REQUIRE((degrade || alphabet.count(a) == 1));
  }
}

TEST_CASE("dependency acceleration scales the dependent's rates") {
  FmtModel m = parse(
      "toplevel top;\n"
      "top or t d;\n"
      "r rdep t deps=d gamma=5;\n"
      "t ebe levels=1 tdeg=30;\n"
      "d ebe levels=1 tdeg=60;\n");
  CompiledModel cm = compile(m, m.costs);
  REQUIRE(cm.chain.n_states() == 4);

  // locate the state where only the trigger has failed: reached from the
  // initial state by the trigger's degrade action
  uint32_t init = cm.chain.initial();
  uint32_t after_t = UINT32_MAX, after_d = UINT32_MAX;
  for (const auto& tr : cm.chain.transitions(init)) {
    std::string a(cm.chain.action_name(tr.action));
    if (a == "degrade_1@t") {
      REQUIRE(tr.rate == Catch::Approx(1.0 / 30.0));
      after_t = tr.dst;
    }
    if (a == "degrade_1@d") {
      REQUIRE(tr.rate == Catch::Approx(1.0 / 60.0));
      after_d = tr.dst;
    }
  }
  REQUIRE(after_t != UINT32_MAX);
  REQUIRE(after_d != UINT32_MAX);
  for (const auto& tr : cm.chain.transitions(after_t)) {
    if (std::string(cm.chain.action_name(tr.action)) == "degrade_1@d")
      REQUIRE(tr.rate == Catch::Approx(5.0 / 60.0));  // gamma-accelerated
  }
  for (const auto& tr : cm.chain.transitions(after_d)) {
    if (std::string(cm.chain.action_name(tr.action)) == "degrade_1@t")
      REQUIRE(tr.rate == Catch::Approx(1.0 / 30.0));  // trigger unaffected
  }
}

TEST_CASE("duplicate resolution makes the shared-trigger rewrite neutral") {
  FmtModel m = parse(
      "toplevel top;\n"
      "top or t d;\n"
      "r rdep t deps=d gamma=3;\n"
      "t ebe levels=1 tdeg=30;\n"
      "d ebe levels=2 tdeg=60;\n");
  FmtModel dag = to_dag(m);
  REQUIRE(dag.nodes().size() == m.nodes().size() + 1);

  CompiledModel a = compile(m, m.costs);
  CompiledModel b = compile(dag, dag.costs);
  std::ostringstream da, db;
  dump(a.chain, da);
  dump(b.chain, db);
  REQUIRE(da.str() == db.str());
}

TEST_CASE("abstracted leaves degrade exponentially and skip maintenance") {
  FmtModel m = parse(
      "toplevel top;\n"
      "top or a e;\n"
      "a ebe levels=1 tdeg=500 abstract=1;\n"
      "e ebe levels=1 tdeg=1e15;\n"
      "policy trep=50 toh=off tinsp=off stages=1;\n");
  CompiledModel cm = compile(m, m.costs);

  // the abstract leaf never trips the repair guard and owns no repair rows,
  // so its failure stays the bare exponential under any policy
  for (double t : {100.0, 500.0, 2000.0}) {
    double want = 1.0 - std::exp(-t / 500.0);
    REQUIRE(failed_prob(cm, t) == Catch::Approx(want).margin(1e-8));
  }
  FmtModel bare = m;
  bare.policy = MaintenancePolicy{};
  CompiledModel free_run = compile(bare, bare.costs);
  REQUIRE(failed_prob(cm, 2000.0) ==
          Catch::Approx(failed_prob(free_run, 2000.0)).margin(1e-9));
}

TEST_CASE("state budget trips deterministically") {
  FmtModel m = parse(
      "toplevel top;\n"
      "top or a b c;\n"
      "a ebe levels=5 tdeg=100;\n"
      "b ebe levels=5 tdeg=100;\n"
      "c ebe levels=5 tdeg=100;\n"
      "policy trep=10 toh=40 tinsp=3;\n");
  CompileOptions o;
  o.max_states = 10;
  REQUIRE_THROWS_AS(compile(m, m.costs, o), budget_error);
}

TEST_CASE("compilation is deterministic") {
  FmtModel m = parse(
      "toplevel top;\n"
      "top or a b;\n"
      "a ebe levels=2 tdeg=40 tclean=1 treplace=3;\n"
      "b ebe levels=2 tdeg=70 tclean=1 treplace=3;\n"
      "policy trep=15 toh=80 tinsp=5 stages=2;\n");
  CompiledModel a = compile(m, m.costs);
  CompiledModel b = compile(m, m.costs);
  std::ostringstream da, db;
  dump(a.chain, da);
  dump(b.chain, db);
  REQUIRE(da.str() == db.str());
  REQUIRE(a.stats.n_states == b.stats.n_states);
  REQUIRE(a.stats.n_transitions == b.stats.n_transitions);
}

TEST_CASE("failure entry rates collect transitions into failed states") {
  FmtModel m = parse(
      "toplevel e;\n"
      "e ebe levels=3 tdeg=90;\n");
  CompiledModel cm = compile(m, m.costs);
  double total = 0;
  for (uint32_t s = 0; s < cm.chain.n_states(); ++s) {
    if (cm.failed[s]) REQUIRE(cm.fail_entry_rate[s] == 0.0);
    total += cm.fail_entry_rate[s];
  }
  // only the last healthy level feeds the failed state, at rate levels/tdeg
  REQUIRE(total == Catch::Approx(3.0 / 90.0));
}
