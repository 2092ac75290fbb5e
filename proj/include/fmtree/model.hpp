#pragma once
// Domain types for fault maintenance trees plus structural validation and the
// dependency-duplication transform that prepares models for decomposition.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "fmtree/base.hpp"

namespace fmtree {

// Leaf component with `levels` discrete degradation levels; reaching the last
// one is failure. t_deg is the total mean time to failure in days, t_clean
// and t_replace the durations of the two maintenance actions.
struct EbeSpec {
  std::string id;
  uint32_t levels = 1;
  double t_deg = 1.0;
  double t_clean = 1.0;
  double t_replace = 7.0;
  // set by the decomposition pipeline when this leaf stands in for an
  // analysed sub-graph; excluded from maintenance and guard signals
  bool abstracted = false;
  // stand-in return rate from the failed level (0 = the leaf stays down);
  // only meaningful on abstracted leaves, not expressible in the text format
  double repair_rate = 0;
  // nonempty when this leaf is a dependency-gate trigger copy made by to_dag
  std::string duplicate_of;
  int line = 0;

  friend bool operator==(const EbeSpec& a, const EbeSpec& b) {
    return a.id == b.id && a.levels == b.levels && a.t_deg == b.t_deg &&
           a.t_clean == b.t_clean && a.t_replace == b.t_replace &&
           a.abstracted == b.abstracted && a.duplicate_of == b.duplicate_of;
  }
};

struct GateSpec {
  enum class Kind { kOr, kRdep };
  std::string id;
  Kind kind = Kind::kOr;
  std::vector<std::string> inputs;
  // RDEP only: acceleration factor and the leaves it accelerates
  double gamma = 1.0;
  std::vector<std::string> dependents;
  int line = 0;

  friend bool operator==(const GateSpec& a, const GateSpec& b) {
    return a.id == b.id && a.kind == b.kind && a.inputs == b.inputs && a.gamma == b.gamma &&
           a.dependents == b.dependents;
  }
};

using NodeSpec = std::variant<EbeSpec, GateSpec>;

inline const std::string& node_id(const NodeSpec& n) {
  return std::holds_alternative<EbeSpec>(n) ? std::get<EbeSpec>(n).id : std::get<GateSpec>(n).id;
}

// Periodic maintenance cadences in days; kInf disables a timer entirely.
struct MaintenancePolicy {
  double t_rep = kInf;   // repair check period
  double t_oh = kInf;    // overhaul period
  double t_insp = kInf;  // inspection period
  uint32_t timer_stages = 3;  // Erlang stages approximating each timer

  friend bool operator==(const MaintenancePolicy&, const MaintenancePolicy&) = default;
};

struct CostModel {
  double repair = 100.0;
  double replace = 5000.0;
  double operational_per_day = 0.0;
  double failure_per_day = 0.0;

  friend bool operator==(const CostModel&, const CostModel&) = default;
};

struct Violation {
  std::string node;
  std::string message;
  bool warning = false;
};

class FmtModel {
 public:
  std::string top_event;
  MaintenancePolicy policy;
  CostModel costs;

  void add(EbeSpec e) { add_node(NodeSpec(std::move(e))); }
  void add(GateSpec g) { add_node(NodeSpec(std::move(g))); }
  void add(NodeSpec n) { add_node(std::move(n)); }

  const std::vector<NodeSpec>& nodes() const { return nodes_; }

  const NodeSpec* find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &nodes_[it->second];
  }

  const EbeSpec* ebe(const std::string& id) const {
    const NodeSpec* n = find(id);
    return n ? std::get_if<EbeSpec>(n) : nullptr;
  }

  const GateSpec* gate(const std::string& id) const {
    const NodeSpec* n = find(id);
    return n ? std::get_if<GateSpec>(n) : nullptr;
  }

  friend bool operator==(const FmtModel& a, const FmtModel& b) {
    return a.top_event == b.top_event && a.policy == b.policy && a.costs == b.costs &&
           a.nodes_ == b.nodes_;
  }

 private:
  void add_node(NodeSpec n) {
    auto [it, fresh] = index_.try_emplace(node_id(n), nodes_.size());
    if (!fresh) throw std::invalid_argument("duplicate node id '" + node_id(n) + "'");
    nodes_.push_back(std::move(n));
  }

  std::vector<NodeSpec> nodes_;
  std::unordered_map<std::string, size_t> index_;
};

inline bool is_valid(const std::vector<Violation>& vs) {
  for (const Violation& v : vs)
    if (!v.warning) return false;
  return true;
}

namespace detail {

// DFS over gate-input edges; returns false on a cycle
inline bool acyclic_from(const FmtModel& m, const std::string& id,
                         std::unordered_map<std::string, int>& color) {
  int& c = color[id];
  if (c == 2) return true;
  if (c == 1) return false;
  c = 1;
  if (const GateSpec* g = m.gate(id))
    for (const std::string& in : g->inputs)
      if (m.find(in) && !acyclic_from(m, in, color)) return false;
  c = 2;
  return true;
}

inline void reach_from(const FmtModel& m, const std::string& id,
                       std::unordered_set<std::string>& seen) {
  if (!m.find(id) || !seen.insert(id).second) return;
  if (const GateSpec* g = m.gate(id))
    for (const std::string& in : g->inputs) reach_from(m, in, seen);
}

}  // namespace detail

// Structural well-formedness. Violations are data; `warning` entries do not
// make the model invalid.
inline std::vector<Violation> validate(const FmtModel& m) {
  std::vector<Violation> out;
  auto err = [&](const std::string& node, std::string msg) {
    out.push_back({node, std::move(msg), false});
  };
  auto warn = [&](const std::string& node, std::string msg) {
    out.push_back({node, std::move(msg), true});
  };

  if (m.top_event.empty()) err("", "no top event declared");
  else if (!m.find(m.top_event)) err(m.top_event, "top event references unknown node");
  else if (m.gate(m.top_event) && m.gate(m.top_event)->kind == GateSpec::Kind::kRdep)
    err(m.top_event, "top event cannot be a dependency gate");

  // covered = appears as some gate's input; or_parents counts tree edges only
  std::unordered_map<std::string, int> or_parents;
  std::unordered_set<std::string> covered;
  for (const NodeSpec& n : m.nodes()) {
    const GateSpec* g = std::get_if<GateSpec>(&n);
    if (!g) continue;
    for (const std::string& in : g->inputs) {
      covered.insert(in);
      if (g->kind == GateSpec::Kind::kOr) or_parents[in]++;
    }
  }

  for (const NodeSpec& n : m.nodes()) {
    const std::string& id = node_id(n);

    if (const EbeSpec* e = std::get_if<EbeSpec>(&n)) {
      if (e->levels < 1) err(id, "degradation levels must be at least 1");
      if (!(e->t_deg > 0)) err(id, "degradation time must be positive");
      if (!(e->t_clean > 0)) err(id, "cleaning duration must be positive");
      if (!(e->t_replace > 0)) err(id, "replacement duration must be positive");
      if (e->t_clean == e->t_replace)
        err(id, "cleaning and replacement durations must differ (only one action at a time)");
      if (!e->duplicate_of.empty()) {
        const EbeSpec* orig = m.ebe(e->duplicate_of);
        if (!orig) err(id, "duplicate references unknown original '" + e->duplicate_of + "'");
      }
    } else {
      const GateSpec& g = std::get<GateSpec>(n);
      if (g.kind == GateSpec::Kind::kOr) {
        if (g.inputs.empty()) err(id, "OR gate needs at least one input");
        for (const std::string& in : g.inputs) {
          if (!m.find(in)) err(id, "unknown input '" + in + "'");
          else if (const GateSpec* ig = m.gate(in); ig && ig->kind == GateSpec::Kind::kRdep)
            err(id, "dependency gate '" + in + "' cannot be a gate input");
        }
      } else {
        if (g.inputs.size() != 1) err(id, "dependency gate needs exactly one trigger input");
        else if (!m.find(g.inputs[0])) err(id, "unknown trigger '" + g.inputs[0] + "'");
        else if (!m.ebe(g.inputs[0])) err(id, "dependency trigger must be a basic event");
        if (g.gamma < 1.0) err(id, "acceleration factor must be at least 1");
        if (g.dependents.empty()) err(id, "dependency gate needs at least one dependent");
        for (const std::string& d : g.dependents) {
          if (!m.ebe(d)) err(id, "dependent '" + d + "' is not a basic event");
          else if (!g.inputs.empty() && d == g.inputs[0])
            err(id, "a trigger cannot be its own dependent");
        }
      }
    }

    // root uniqueness: only the top event (and floating dependency gates) may
    // lack a parent; nothing may have two tree parents
    bool is_rdep = m.gate(id) && m.gate(id)->kind == GateSpec::Kind::kRdep;
    if (!covered.count(id) && !is_rdep && id != m.top_event)
      err(id, "multiple top events (node has no parent)");
    if (or_parents[id] > 1) err(id, "node has multiple parents (shared subtrees unsupported)");
    if (id == m.top_event && covered.count(id)) err(id, "top event cannot be an input");
  }

  std::unordered_map<std::string, int> color;
  for (const NodeSpec& n : m.nodes())
    if (!detail::acyclic_from(m, node_id(n), color)) {
      err(node_id(n), "cycle through this node");
      break;
    }

  // reachability: the tree hangs off the top event, dependency gates attach
  // through their trigger and dependents
  if (!m.top_event.empty() && m.find(m.top_event) && color.size() == m.nodes().size()) {
    std::unordered_set<std::string> seen;
    detail::reach_from(m, m.top_event, seen);
    for (const NodeSpec& n : m.nodes()) {
      const GateSpec* g = std::get_if<GateSpec>(&n);
      if (!g || g->kind != GateSpec::Kind::kRdep) continue;
      bool anchored = false;
      if (!g->inputs.empty())
        if (const EbeSpec* trig = m.ebe(g->inputs[0])) {
          const std::string& root =
              trig->duplicate_of.empty() ? trig->id : trig->duplicate_of;
          anchored = seen.count(root) > 0;
        }
      for (const std::string& d : g->dependents) anchored = anchored || seen.count(d);
      if (anchored) {
        seen.insert(g->id);
        if (!g->inputs.empty()) seen.insert(g->inputs[0]);
        for (const std::string& d : g->dependents)
          if (!seen.count(d)) err(g->id, "dependent '" + d + "' unreachable from top event");
      }
    }
    for (const NodeSpec& n : m.nodes())
      if (!seen.count(node_id(n))) err(node_id(n), "unreachable from top event");
  }

  if (m.policy.timer_stages < 1) err("policy", "timer stages must be at least 1");
  if (!(m.policy.t_rep > 0)) err("policy", "repair period must be positive");
  if (!(m.policy.t_oh > 0)) err("policy", "overhaul period must be positive");
  if (!(m.policy.t_insp > 0)) err("policy", "inspection period must be positive");
  if (!(m.policy.t_insp <= m.policy.t_rep && m.policy.t_rep <= m.policy.t_oh))
    warn("policy", "cadence inverted: expected inspection <= repair <= overhaul period");

  if (m.costs.repair < 0 || m.costs.replace < 0 || m.costs.operational_per_day < 0 ||
      m.costs.failure_per_day < 0)
    err("costs", "costs must be nonnegative");

  return out;
}

// EBE ids in the tree under `root`, following OR-gate inputs, in DFS order.
inline std::vector<std::string> subtree_ebes(const FmtModel& m, const std::string& root) {
  std::vector<std::string> out;
  std::vector<std::string> stack{root};
  std::unordered_set<std::string> seen;
  while (!stack.empty()) {
    std::string id = stack.back();
    stack.pop_back();
    if (!seen.insert(id).second) continue;
    if (m.ebe(id)) out.push_back(id);
    else if (const GateSpec* g = m.gate(id); g && g->kind == GateSpec::Kind::kOr)
      for (auto it = g->inputs.rbegin(); it != g->inputs.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

// For every dependency gate, re-points the trigger edge at a fresh copy of
// the trigger leaf, tagged with duplicate_of, so each gate owns its trigger
// directly. Already-duplicated triggers are left alone (idempotent).
inline FmtModel to_dag(const FmtModel& m) {
  if (!is_valid(validate(m))) throw std::invalid_argument("to_dag: model is not well-formed");
  FmtModel out;
  out.top_event = m.top_event;
  out.policy = m.policy;
  out.costs = m.costs;

  std::vector<EbeSpec> fresh;
  std::unordered_set<std::string> taken;
  for (const NodeSpec& n : m.nodes()) taken.insert(node_id(n));

  for (const NodeSpec& n : m.nodes()) {
    if (const GateSpec* g = std::get_if<GateSpec>(&n);
        g && g->kind == GateSpec::Kind::kRdep && !g->inputs.empty()) {
      const EbeSpec* trig = m.ebe(g->inputs[0]);
      if (trig && trig->duplicate_of.empty()) {
        EbeSpec dup = *trig;
        dup.duplicate_of = trig->id;
        dup.id = trig->id + "_for_" + g->id;
        while (taken.count(dup.id)) dup.id += "_";
        taken.insert(dup.id);
        fresh.push_back(dup);
        GateSpec moved = *g;
        moved.inputs[0] = dup.id;
        out.add(std::move(moved));
        continue;
      }
    }
    out.add(NodeSpec(n));
  }
  for (EbeSpec& d : fresh) out.add(std::move(d));
  return out;
}

}  // namespace fmtree
