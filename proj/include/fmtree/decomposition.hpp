#pragma once
// Scaling through modular analysis: the tree is cut at independent gates,
// each module is analysed on its own chain, and its failure law is folded
// into the parent as a single mean-equivalent leaf, recomputed per horizon.

#include <algorithm>
#include <chrono>
#include <functional>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "fmtree/analysis.hpp"
#include "fmtree/model.hpp"
#include "fmtree/semantics.hpp"

namespace fmtree {

struct SubGraph {
  std::string root;                   // gate (or leaf) heading this module
  uint32_t level = 0;                 // 0 = the system-level residual module
  std::vector<std::string> nodes;     // node ids analysed inside this module
  std::vector<std::string> children;  // roots of directly nested modules
};

struct Decomposition {
  FmtModel dag;                   // shared-trigger rewrite the module ids index into
  std::vector<SubGraph> modules;  // pre-order: parents before their children
};

namespace detail {

inline const std::string& resolve_leaf(const FmtModel& m, const std::string& id) {
  const EbeSpec* e = m.ebe(id);
  return (e && !e->duplicate_of.empty()) ? e->duplicate_of : id;
}

}  // namespace detail

// Cuts the rewritten tree at every gate owning at least two distinct leaves,
// outermost gates first, then recursively inside each module. A gate whose
// subtree splits a dependency gate's trigger from its dependents (or a
// duplicate from its original) is not a valid boundary and stays inline.
inline Decomposition decompose(const FmtModel& m) {
  Decomposition dec;
  dec.dag = to_dag(m);
  const FmtModel& dag = dec.dag;

  // resolved leaf set and raw id set per node of the OR structure
  std::unordered_map<std::string, std::set<std::string>> eset, raw;
  std::function<void(const std::string&)> walk = [&](const std::string& id) {
    if (eset.count(id)) return;
    std::set<std::string>&res = eset[id], &rw = raw[id];
    if (dag.ebe(id)) {
      res.insert(detail::resolve_leaf(dag, id));
      rw.insert(id);
      return;
    }
    const GateSpec* g = dag.gate(id);
    if (!g || g->kind != GateSpec::Kind::kOr) return;
    for (const std::string& in : g->inputs) {
      walk(in);
      res.insert(eset[in].begin(), eset[in].end());
      rw.insert(raw[in].begin(), raw[in].end());
    }
  };
  walk(dag.top_event);

  // coupling sets that may not straddle a module boundary
  std::vector<std::set<std::string>> couplings;
  for (const NodeSpec& n : dag.nodes()) {
    const GateSpec* g = std::get_if<GateSpec>(&n);
    if (!g || g->kind != GateSpec::Kind::kRdep) continue;
    std::set<std::string> s;
    if (!g->inputs.empty()) s.insert(detail::resolve_leaf(dag, g->inputs[0]));
    for (const std::string& d : g->dependents) s.insert(detail::resolve_leaf(dag, d));
    couplings.push_back(std::move(s));
  }

  auto qualifies = [&](const std::string& id) {
    const GateSpec* g = dag.gate(id);
    if (!g || g->kind != GateSpec::Kind::kOr) return false;
    const std::set<std::string>& e = eset[id];
    if (e.size() < 2) return false;
    for (const std::set<std::string>& s : couplings) {
      bool any = false, all = true;
      for (const std::string& x : s) {
        if (e.count(x)) any = true;
        else all = false;
      }
      if (any && !all) return false;
    }
    // a duplicate leaf inside must bring its original along
    for (const std::string& r : raw[id]) {
      const EbeSpec* leaf = dag.ebe(r);
      if (leaf && !leaf->duplicate_of.empty() && !raw[id].count(leaf->duplicate_of)) return false;
    }
    return true;
  };

  std::function<void(const std::string&, uint32_t)> build = [&](const std::string& root,
                                                                uint32_t level) {
    size_t my = dec.modules.size();
    dec.modules.push_back({root, level, {}, {}});
    std::vector<std::string> pending;  // child modules, recursed after this one
    std::vector<std::string> stack{root};
    while (!stack.empty()) {
      std::string id = stack.back();
      stack.pop_back();
      if (id != root && qualifies(id)) {
        dec.modules[my].children.push_back(id);
        pending.push_back(id);
        continue;
      }
      dec.modules[my].nodes.push_back(id);
      if (const GateSpec* g = dag.gate(id); g && g->kind == GateSpec::Kind::kOr)
        for (auto it = g->inputs.rbegin(); it != g->inputs.rend(); ++it) stack.push_back(*it);
    }
    for (const std::string& c : pending) build(c, level + 1);
  };
  build(dag.top_event, 0);

  // each dependency gate lives in the deepest module covering its coupling
  for (const NodeSpec& n : dag.nodes()) {
    const GateSpec* g = std::get_if<GateSpec>(&n);
    if (!g || g->kind != GateSpec::Kind::kRdep) continue;
    std::set<std::string> s;
    if (!g->inputs.empty()) s.insert(detail::resolve_leaf(dag, g->inputs[0]));
    for (const std::string& d : g->dependents) s.insert(detail::resolve_leaf(dag, d));
    SubGraph* home = nullptr;
    for (SubGraph& sg : dec.modules) {
      const std::set<std::string>& e = eset[sg.root];
      bool all = true;
      for (const std::string& x : s)
        if (!e.count(x)) {
          all = false;
          break;
        }
      if (all && (!home || sg.level > home->level)) home = &sg;
    }
    if (!home) home = &dec.modules.front();
    home->nodes.push_back(g->id);
    // the trigger stand-in travels with its gate unless already walked
    if (!g->inputs.empty()) {
      const std::string& trig = g->inputs[0];
      bool present = false;
      for (const std::string& x : home->nodes) present |= x == trig;
      if (!present && dag.ebe(trig)) home->nodes.push_back(trig);
    }
  }
  return dec;
}

// ------------------------------------------------------------- abstraction --

struct AbstractOptions {
  uint32_t stages = 1;  // stage count of the stand-in leaves (mean preserved)
  TransientOptions transient{};
  CompileOptions compile{};
};

struct ModuleReport {
  std::string root;
  uint32_t level = 0;
  uint64_t states = 0;
  double de = 0;  // probability the module top has failed by the horizon
  double wall_ms = 0;
};

struct AbstractResult {
  double value = 0;
  uint64_t total_states = 0;
  uint64_t max_states = 0;
  double wall_ms = 0;
  std::vector<ModuleReport> modules;  // pre-order, level 0 first
};

namespace detail {

struct StandIn {
  double lambda = 0;  // failure rate matched to the module's horizon unreliability
  double nu = 0;      // return rate matched to the module's average unavailability
};

// mean fraction of [0,T] a two-state element (up -> down at lambda,
// down -> up at nu) spends down, starting up
inline double avg_down(double lambda, double nu, double T) {
  double s = lambda + nu;
  if (s * T < 1e-12) return lambda * T / 2.0;
  return lambda / s * (1.0 - (1.0 - std::exp(-s * T)) / (s * T));
}

// solve avg_down(lambda, nu, T) = target for nu; monotone, so bisection
inline double calibrate_nu(double lambda, double T, double target) {
  if (target <= 0) return 1e4 * std::max(lambda, 1.0 / T);
  if (target >= avg_down(lambda, 0, T)) return 0.0;
  double lo = 0, hi = 1e4 * std::max(lambda, 1.0 / T);
  if (target < avg_down(lambda, hi, T)) return hi;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    (avg_down(lambda, mid, T) > target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline FmtModel module_model(const Decomposition& dec, const SubGraph& sg,
                             const std::unordered_map<std::string, StandIn>& child_standin,
                             bool system_costs, uint32_t stages) {
  FmtModel mm;
  mm.top_event = sg.root;
  mm.policy = dec.dag.policy;
  mm.costs = dec.dag.costs;
  if (!system_costs) {
    // running and downtime costs are metered at the system level only;
    // modules bill their own repair and replacement events
    mm.costs.operational_per_day = 0;
    mm.costs.failure_per_day = 0;
  }
  for (const std::string& id : sg.nodes) {
    if (const EbeSpec* e = dec.dag.ebe(id)) mm.add(*e);
    else if (const GateSpec* g = dec.dag.gate(id)) mm.add(*g);
  }
  for (const std::string& c : sg.children) {
    const StandIn& si = child_standin.at(c);
    EbeSpec a;
    a.id = c;
    a.levels = stages;
    double lam = std::max(si.lambda, 1e-30);  // keep rates positive
    a.t_deg = 1.0 / lam;
    a.abstracted = true;
    a.repair_rate = si.nu;
    mm.add(a);
  }
  return mm;
}

}  // namespace detail

// Bottom-up modular evaluation: every nested module is analysed at the given
// horizon and folded into its parent as a two-parameter stand-in leaf whose
// horizon unreliability and average unavailability both match; the metric is
// read off the system-level module. Expected cost also sums the repair bills
// of the nested modules; the other metrics live at the root.
inline AbstractResult abstract_analyze(const FmtModel& m, Metric metric, double horizon,
                                       const AbstractOptions& o = {}) {
  auto t0 = std::chrono::steady_clock::now();
  AbstractResult res;
  if (!(horizon > 0)) {
    // degenerate horizon: nothing can fail and no stand-in rate is fittable
    res.value = (metric == Metric::kReliability || metric == Metric::kAvailability) ? 1.0 : 0.0;
    return res;
  }
  Decomposition dec = decompose(m);
  std::unordered_map<std::string, detail::StandIn> standin;
  // first-passage queries never leave the failed states, so the stand-ins'
  // return moves only matter for the long-run metrics
  const bool need_nu = metric != Metric::kReliability && horizon > 0;
  double nested_cost = 0;
  for (auto it = dec.modules.rbegin(); it != dec.modules.rend(); ++it) {
    const SubGraph& sg = *it;
    auto m0 = std::chrono::steady_clock::now();
    const bool system = sg.level == 0;
    FmtModel mm = detail::module_model(dec, sg, standin, system, o.stages);
    CompiledModel cm = compile(mm, mm.costs, o.compile);
    ModuleReport rep;
    rep.root = sg.root;
    rep.level = sg.level;
    rep.states = cm.chain.n_states();
    res.total_states += rep.states;
    res.max_states = std::max(res.max_states, rep.states);
    rep.de = 1.0 - reliability(cm, horizon, o.transient);
    if (system) {
      switch (metric) {
        case Metric::kReliability: res.value = 1.0 - rep.de; break;
        case Metric::kAvailability: res.value = availability(cm, horizon, o.transient); break;
        case Metric::kExpectedFailures:
          res.value = expected_failures(cm, horizon, o.transient);
          break;
        case Metric::kExpectedCost:
          res.value = expected_cost(cm, horizon, o.transient) + nested_cost;
          break;
      }
    } else {
      double de = std::min(std::max(rep.de, 0.0), 1.0 - 1e-12);
      detail::StandIn si;
      si.lambda = equivalent_failure_rate(de, horizon);
      if (need_nu) {
        double down = 1.0 - availability(cm, horizon, o.transient);
        si.nu = detail::calibrate_nu(std::max(si.lambda, 1e-30), horizon, down);
      }
      standin[sg.root] = si;
      if (metric == Metric::kExpectedCost)
        nested_cost += expected_cost(cm, horizon, o.transient);
    }
    rep.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - m0).count();
    res.modules.push_back(rep);
  }
  std::reverse(res.modules.begin(), res.modules.end());
  res.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

// ------------------------------------------------------------- comparison --

struct CompareRow {
  double horizon = 0;
  double original_ms = 0;
  double original_value = 0;
  double mttf_ms = 0;      // time spent analysing the nested modules
  double abstract_ms = 0;  // time spent on the system-level module
  double abstract_value = 0;
  uint64_t original_states = 0;
  uint64_t abstract_states = 0;  // summed over all module chains
};

// side-by-side run of the monolithic and the modular pipeline; the one-off
// monolithic compile is not charged to either column
inline std::vector<CompareRow> compare(const FmtModel& m, Metric metric,
                                       const std::vector<double>& horizons,
                                       const AbstractOptions& o = {}) {
  CompiledModel mono = compile(m, m.costs, o.compile);
  std::vector<CompareRow> rows;
  for (double h : horizons) {
    CompareRow r;
    r.horizon = h;
    MetricResult mr = compute_metric(mono, metric, h, o.transient);
    r.original_ms = mr.wall_ms;
    r.original_value = mr.value;
    r.original_states = mono.chain.n_states();
    AbstractResult ar = abstract_analyze(m, metric, h, o);
    r.abstract_value = ar.value;
    r.abstract_states = ar.total_states;
    for (const ModuleReport& rep : ar.modules)
      (rep.level == 0 ? r.abstract_ms : r.mttf_ms) += rep.wall_ms;
    rows.push_back(r);
  }
  return rows;
}

inline void write_compare_csv(std::ostream& os, const std::vector<CompareRow>& rows) {
  os << "horizon_days,original_ms,original_value,mttf_ms,abstract_ms,abstract_value\n";
  for (const CompareRow& r : rows)
    os << fmt_double(r.horizon) << ',' << fmt_double(r.original_ms) << ','
       << fmt_double(r.original_value) << ',' << fmt_double(r.mttf_ms) << ','
       << fmt_double(r.abstract_ms) << ',' << fmt_double(r.abstract_value) << "\n";
}

}  // namespace fmtree
