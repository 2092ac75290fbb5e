#pragma once
// Element-level CTMCs for fault maintenance trees, the guard signals that make
// maintenance transitions state-dependent, and the compiler that builds the
// global synchronised chain with metric labels and reward rates attached.

#include <chrono>
#include <map>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fmtree/ctmc.hpp"
#include "fmtree/model.hpp"

namespace fmtree {

// ----------------------------------------------------------------- guards --

enum class EbeLabel { kNew, kThresh, kFailed };

// Snapshot of every leaf's degradation label in one composite state. Ids in
// `exempt` (stand-ins for already-analysed sub-graphs) are invisible to the
// maintenance signals but still count for failure propagation.
struct GuardContext {
  std::unordered_map<std::string, EbeLabel> labels;
  std::unordered_set<std::string> exempt;
};

namespace detail {
// a dependency trigger may be a duplicate leaf; status lives at the original
inline const EbeLabel* ctx_lookup(const GuardContext& ctx, const FmtModel& m,
                                  const std::string& id) {
  auto it = ctx.labels.find(id);
  if (it != ctx.labels.end()) return &it->second;
  if (const EbeSpec* e = m.ebe(id); e && !e->duplicate_of.empty()) {
    it = ctx.labels.find(e->duplicate_of);
    if (it != ctx.labels.end()) return &it->second;
  }
  return nullptr;
}
}  // namespace detail

// 1 iff the dependency gate's trigger leaf has failed
inline bool guard_in(const GuardContext& ctx, const FmtModel& m, const GateSpec& rdep) {
  if (rdep.inputs.empty()) return false;
  const EbeLabel* l = detail::ctx_lookup(ctx, m, rdep.inputs[0]);
  return l && *l == EbeLabel::kFailed;
}

// effective degradation delay per dependent: T_deg/gamma while the trigger is
// failed (gamma is a rate multiplier), T_deg otherwise
inline std::vector<double> guard_accel(const GuardContext& ctx, const FmtModel& m,
                                       const GateSpec& rdep) {
  double div = guard_in(ctx, m, rdep) ? rdep.gamma : 1.0;
  std::vector<double> out;
  out.reserve(rdep.dependents.size());
  for (const std::string& d : rdep.dependents) {
    const EbeSpec* e = m.ebe(d);
    out.push_back(e ? e->t_deg / div : kInf);
  }
  return out;
}

// 1 iff the node (leaf or OR subtree) has failed in this state
inline bool guard_fail(const GuardContext& ctx, const FmtModel& m, const std::string& node) {
  if (const EbeLabel* l = detail::ctx_lookup(ctx, m, node)) return *l == EbeLabel::kFailed;
  if (const GateSpec* g = m.gate(node); g && g->kind == GateSpec::Kind::kOr) {
    for (const std::string& in : g->inputs)
      if (guard_fail(ctx, m, in)) return true;
  }
  return false;
}

// 1 iff any maintained leaf sits strictly between new and failed
inline bool guard_thresh(const GuardContext& ctx) {
  for (const auto& [id, l] : ctx.labels)
    if (l == EbeLabel::kThresh && !ctx.exempt.count(id)) return true;
  return false;
}

// 1 iff any maintained leaf has left its new state
inline bool guard_trig(const GuardContext& ctx) {
  for (const auto& [id, l] : ctx.labels)
    if (l != EbeLabel::kNew && !ctx.exempt.count(id)) return true;
  return false;
}

// ---------------------------------------------------------------- elements --

enum class Role {
  kEbe,
  kRm,
  kIm,
  kDelayTdeg,
  kDelayTcln,
  kDelayTrpl,
  kDelayTrp,
  kDelayToh,
  kDelayTin,
};

// guard attached to one labelled transition; kNone fires unconditionally
enum class Guard { kNone, kTrigIs0, kTrigIs1, kThreshIs0, kThreshIs1 };

struct ElementCtmc {
  Ctmc ctmc;
  Role role = Role::kEbe;
  std::string owner;  // node id, or "policy" for the shared automata
  // (src, action id, dst) -> guard; transitions absent here are unguarded
  std::map<std::tuple<uint32_t, uint32_t, uint32_t>, Guard> guards;
};

inline EbeLabel level_label(uint32_t level, uint32_t levels) {
  if (level == 0) return EbeLabel::kNew;
  return level >= levels ? EbeLabel::kFailed : EbeLabel::kThresh;
}

// Degradation skeleton of one leaf: states s_0..s_N, degrade_i advances one
// level, perform_clean steps back one, perform_replace returns to s_0. All
// rates 1; the synchronised timing partner supplies the true rates.
inline ElementCtmc ebe_ctmc(const EbeSpec& spec) {
  if (spec.levels < 1) throw std::invalid_argument("ebe_ctmc: levels must be at least 1");
  ElementCtmc el;
  el.role = Role::kEbe;
  el.owner = spec.id;
  Ctmc& c = el.ctmc;
  c.add_states(spec.levels + 1);
  c.set_initial(0);
  for (uint32_t s = 0; s <= spec.levels; ++s) {
    EbeLabel l = level_label(s, spec.levels);
    c.add_label(s, l == EbeLabel::kNew ? "new" : l == EbeLabel::kFailed ? "failed" : "thresh");
  }
  for (uint32_t i = 1; i <= spec.levels; ++i)
    c.add_transition(i - 1, "degrade_" + std::to_string(i), 1.0, i);
  for (uint32_t i = 1; i <= spec.levels; ++i) {
    c.add_transition(i, "perform_clean", 1.0, i - 1);
    c.add_transition(i, "perform_replace", 1.0, 0u);
  }
  c.finalize();
  return el;
}

// Repair module. Idle until a periodic check or an inspection hands it work;
// the pending states remember which action was queued so cleaning and
// replacement can never race. Pending states are labelled maintenance.
inline ElementCtmc rm_ctmc(const MaintenancePolicy&) {
  ElementCtmc el;
  el.role = Role::kRm;
  el.owner = "policy";
  Ctmc& c = el.ctmc;
  c.add_states(3);  // 0 idle, 1 pending clean, 2 pending replace
  c.set_initial(0);
  c.add_label(1, "maintenance");
  c.add_label(2, "maintenance");
  auto guarded = [&](uint32_t src, const char* act, uint32_t dst, Guard g) {
    c.add_transition(src, act, 1.0, dst);
    el.guards[{src, static_cast<uint32_t>(c.find_action(act)), dst}] = g;
  };
  guarded(0, "check_clean", 1, Guard::kTrigIs1);
  guarded(0, "check_clean", 0, Guard::kTrigIs0);
  guarded(0, "check_replace", 2, Guard::kTrigIs1);
  guarded(0, "check_replace", 0, Guard::kTrigIs0);
  guarded(0, "inspect", 1, Guard::kThreshIs1);
  guarded(0, "inspect", 0, Guard::kThreshIs0);
  c.add_transition(1u, "trigger_clean", 1.0, 1u);
  c.add_transition(1u, "perform_clean", 1.0, 0u);
  c.add_transition(2u, "trigger_replace", 1.0, 2u);
  c.add_transition(2u, "perform_replace", 1.0, 0u);
  c.finalize();
  return el;
}

// Inspection module: raises the threshold signal at inspection epochs and
// stands down when the initiated maintenance completes.
inline ElementCtmc im_ctmc(const MaintenancePolicy&) {
  ElementCtmc el;
  el.role = Role::kIm;
  el.owner = "policy";
  Ctmc& c = el.ctmc;
  c.add_states(2);
  c.set_initial(0);
  auto guarded = [&](uint32_t src, const char* act, uint32_t dst, Guard g) {
    c.add_transition(src, act, 1.0, dst);
    el.guards[{src, static_cast<uint32_t>(c.find_action(act)), dst}] = g;
  };
  guarded(0, "inspect", 1, Guard::kThreshIs1);
  guarded(0, "inspect", 0, Guard::kThreshIs0);
  c.add_transition(1u, "perform_clean", 1.0, 0u);
  c.add_transition(1u, "perform_replace", 1.0, 0u);
  c.finalize();
  return el;
}

// ----------------------------------------------------------------- compile --

struct CompileOptions {
  // collapse each leaf's degradation skeleton and timing chain into one
  // equivalent component (bisimilar, much smaller product)
  bool fuse_degradation = true;
  uint64_t max_states = 2'000'000;
  double mu = 1e6;  // start-up rate of the one-shot global trigger
};

struct CompileStats {
  uint64_t product_cardinality = 1;  // plain product before reachability
  std::vector<uint32_t> component_sizes;
  uint64_t n_states = 0;
  uint64_t n_transitions = 0;
  double wall_ms = 0;
};

struct CompiledModel {
  Ctmc chain;
  CostModel costs;
  int64_t top_failed_ap = -1;
  std::vector<uint8_t> failed;             // top_failed per state
  std::vector<double> repair_event_rate;   // perform_clean completion rate per state
  std::vector<double> replace_event_rate;  // perform_replace completion rate per state
  std::vector<double> fail_entry_rate;     // rate into top_failed per non-failed state
  CompileStats stats;
};

namespace detail {

struct Comp {
  Role role = Role::kEbe;
  std::string owner;
  uint32_t n_states = 0;
  uint32_t init = 0;
  struct Tr {
    uint32_t src, dst;
    uint32_t action;     // composite action id; 0 = internal
    double rate;
    Guard guard = Guard::kNone;
    int accel_ebe = -1;  // index into ebe component list whose acceleration scales this rate
  };
  std::vector<Tr> trs;
  std::vector<std::vector<uint32_t>> by_src;  // transition indices per local state
};

inline void index_comp(Comp& c) {
  c.by_src.assign(c.n_states, {});
  for (uint32_t i = 0; i < c.trs.size(); ++i) c.by_src[c.trs[i].src].push_back(i);
}

// fused leaf: level i advances at N/T_deg (scaled by acceleration), cleaning
// steps one level down, replacement rewinds to 0; level 0 holds permission
// self-loops so global maintenance never deadlocks on a fresh component
inline Comp fused_ebe_comp(const EbeSpec& e, int ebe_ordinal, bool maintained, Ctmc& names) {
  Comp c;
  c.role = Role::kEbe;
  c.owner = e.id;
  c.n_states = e.levels + 1;
  c.init = 0;
  const double r = static_cast<double>(e.levels) / e.t_deg;
  for (uint32_t i = 0; i < e.levels; ++i) {
    uint32_t act = names.action_id("degrade_" + std::to_string(i + 1) + "@" + e.id);
    c.trs.push_back({i, i + 1, act, r, Guard::kNone, ebe_ordinal});
  }
  if (maintained) {
    uint32_t clean = names.action_id("perform_clean");
    uint32_t replace = names.action_id("perform_replace");
    c.trs.push_back({0, 0, clean, 1.0, Guard::kNone, -1});
    c.trs.push_back({0, 0, replace, 1.0, Guard::kNone, -1});
    for (uint32_t i = 1; i <= e.levels; ++i) {
      c.trs.push_back({i, static_cast<uint32_t>(i - 1), clean, 1.0, Guard::kNone, -1});
      c.trs.push_back({i, 0, replace, 1.0, Guard::kNone, -1});
    }
  }
  // an abstracted stand-in may model the analysed sub-graph's own repairs as
  // a private return move; first-passage laws are unaffected
  if (e.abstracted && e.repair_rate > 0)
    c.trs.push_back({e.levels, 0, 0, e.repair_rate, Guard::kNone, -1});
  index_comp(c);
  return c;
}

// unfused pair: the degradation skeleton from ebe_ctmc plus its timing chain
// with every tick carrying all degrade labels (the partner skeleton enables
// exactly one of them per composite state)
inline Comp skeleton_ebe_comp(const EbeSpec& e, Ctmc& names) {
  Comp c;
  c.role = Role::kEbe;
  c.owner = e.id;
  c.n_states = e.levels + 1;
  c.init = 0;
  uint32_t clean = names.action_id("perform_clean");
  uint32_t replace = names.action_id("perform_replace");
  for (uint32_t i = 1; i <= e.levels; ++i) {
    uint32_t act = names.action_id("degrade_" + std::to_string(i) + "@" + e.id);
    c.trs.push_back({static_cast<uint32_t>(i - 1), i, act, 1.0, Guard::kNone, -1});
  }
  c.trs.push_back({0, 0, clean, 1.0, Guard::kNone, -1});
  c.trs.push_back({0, 0, replace, 1.0, Guard::kNone, -1});
  for (uint32_t i = 1; i <= e.levels; ++i) {
    c.trs.push_back({i, static_cast<uint32_t>(i - 1), clean, 1.0, Guard::kNone, -1});
    c.trs.push_back({i, 0, replace, 1.0, Guard::kNone, -1});
  }
  index_comp(c);
  return c;
}

inline Comp tdeg_delay_comp(const EbeSpec& e, int ebe_ordinal, Ctmc& names) {
  Comp c;
  c.role = Role::kDelayTdeg;
  c.owner = e.id;
  const uint32_t n = e.levels;
  c.n_states = n + 2;  // d0 dormant, d1..dn stages, d_{n+1} elapsed
  c.init = 0;
  const double r = static_cast<double>(n) / e.t_deg;
  uint32_t trigger = names.action_id("trigger");
  uint32_t clean = names.action_id("perform_clean");
  uint32_t replace = names.action_id("perform_replace");
  c.trs.push_back({0, 1, trigger, 1.0, Guard::kNone, -1});
  // ticks carry every degrade label; the skeleton picks the one that matches
  for (uint32_t lvl = 1; lvl <= n; ++lvl) {
    uint32_t act = names.action_id("degrade_" + std::to_string(lvl) + "@" + e.id);
    for (uint32_t j = 1; j <= n; ++j)
      c.trs.push_back({j, j + 1, act, r, Guard::kNone, ebe_ordinal});
    c.trs.push_back({n + 1, 1, act, r, Guard::kNone, ebe_ordinal});
  }
  // maintenance restarts the approximation; d1 holds permission
  for (uint32_t j = 1; j <= n + 1; ++j) {
    c.trs.push_back({j, 1, clean, 1.0, Guard::kNone, -1});
    c.trs.push_back({j, 1, replace, 1.0, Guard::kNone, -1});
  }
  index_comp(c);
  return c;
}

// periodic timer: internal Erlang stages, the wrap-around step carries the
// check event. Armed timers start counting immediately; otherwise d0 waits
// for the global trigger that also starts the timing chains.
inline Comp periodic_comp(Role role, double period, uint32_t stages, const char* event,
                          Ctmc& names, bool armed) {
  Comp c;
  c.role = role;
  c.owner = "policy";
  const double r = static_cast<double>(stages) / period;
  if (armed) {
    c.n_states = stages + 1;
    c.init = 0;
    for (uint32_t j = 0; j < stages; ++j) c.trs.push_back({j, j + 1, 0, r, Guard::kNone, -1});
    c.trs.push_back({stages, 0, names.action_id(event), r, Guard::kNone, -1});
  } else {
    c.n_states = stages + 2;
    c.init = 0;
    c.trs.push_back({0, 1, names.action_id("trigger"), 1.0, Guard::kNone, -1});
    for (uint32_t j = 1; j <= stages; ++j) c.trs.push_back({j, j + 1, 0, r, Guard::kNone, -1});
    c.trs.push_back({stages + 1, 1, names.action_id(event), r, Guard::kNone, -1});
  }
  index_comp(c);
  return c;
}

// maintenance-duration chain: idles elapsed, the wrap-around step starts the
// action, the last stage step completes it
inline Comp duration_comp(Role role, double duration, uint32_t stages, const char* start,
                          const char* complete, Ctmc& names) {
  Comp c;
  c.role = role;
  c.owner = "policy";
  c.n_states = stages + 1;  // d1..d_{stages+1}, stored as 0..stages; idle = stages
  c.init = stages;
  const double r = static_cast<double>(stages) / duration;
  c.trs.push_back({stages, 0, names.action_id(start), r, Guard::kNone, -1});
  for (uint32_t j = 0; j + 1 < stages; ++j) c.trs.push_back({j, j + 1, 0, r, Guard::kNone, -1});
  c.trs.push_back({stages - 1, stages, names.action_id(complete), r, Guard::kNone, -1});
  index_comp(c);
  return c;
}

inline Comp from_element(const ElementCtmc& el, Ctmc& names) {
  Comp c;
  c.role = el.role;
  c.owner = el.owner;
  c.n_states = el.ctmc.n_states();
  c.init = el.ctmc.initial();
  for (const Ctmc::Transition& t : el.ctmc.all_transitions()) {
    Guard g = Guard::kNone;
    auto it = el.guards.find({t.src, t.action, t.dst});
    if (it != el.guards.end()) g = it->second;
    uint32_t act = t.action ? names.action_id(el.ctmc.action_name(t.action)) : 0;
    c.trs.push_back({t.src, t.dst, act, t.rate, g, -1});
  }
  index_comp(c);
  return c;
}

}  // namespace detail

// Builds the global chain: one component per maintained leaf (fused, or a
// skeleton/timing pair when fuse_degradation is off), the repair and
// inspection automata, periodic check timers and maintenance-duration chains
// per the policy. Guarded moves are resolved against each composite state.
inline CompiledModel compile(const FmtModel& m, const CostModel& cost,
                             const CompileOptions& opts = {}) {
  auto t0 = std::chrono::steady_clock::now();
  if (!is_valid(validate(m))) throw std::invalid_argument("compile: model is not well-formed");

  CompiledModel out;
  out.costs = cost;
  Ctmc& chain = out.chain;

  // participating leaves: duplicates defer to their original, abstraction
  // stand-ins degrade but are exempt from maintenance and guard signals
  std::vector<const EbeSpec*> ebes;
  for (const NodeSpec& n : m.nodes())
    if (const EbeSpec* e = std::get_if<EbeSpec>(&n))
      if (e->duplicate_of.empty()) ebes.push_back(e);

  bool any_maintained = false;
  double t_cln = 0, t_rpl = 0;
  for (const EbeSpec* e : ebes)
    if (!e->abstracted) {
      any_maintained = true;
      t_cln = std::max(t_cln, e->t_clean);
      t_rpl = std::max(t_rpl, e->t_replace);
    }

  const MaintenancePolicy& p = m.policy;
  const bool has_rep = any_maintained && p.t_rep != kInf;
  const bool has_oh = any_maintained && p.t_oh != kInf;
  const bool has_insp = any_maintained && p.t_insp != kInf;
  const bool has_rm = has_rep || has_oh || has_insp;
  const bool has_clean_path = has_rep || has_insp;

  // per-leaf acceleration: product over dependency gates covering the leaf
  std::vector<std::vector<const GateSpec*>> accel_gates(ebes.size());
  std::unordered_map<std::string, int> ebe_ordinal;
  for (size_t i = 0; i < ebes.size(); ++i) ebe_ordinal[ebes[i]->id] = static_cast<int>(i);
  for (const NodeSpec& n : m.nodes()) {
    const GateSpec* g = std::get_if<GateSpec>(&n);
    if (!g || g->kind != GateSpec::Kind::kRdep) continue;
    for (const std::string& d : g->dependents) {
      auto it = ebe_ordinal.find(d);
      if (it != ebe_ordinal.end()) accel_gates[it->second].push_back(g);
    }
  }

  std::vector<detail::Comp> comps;
  std::vector<int> ebe_comp;  // ebe ordinal -> component index of its skeleton/fused chain
  for (size_t i = 0; i < ebes.size(); ++i) {
    const EbeSpec& e = *ebes[i];
    bool maintained = has_rm && !e.abstracted;
    if (opts.fuse_degradation || e.abstracted) {
      ebe_comp.push_back(static_cast<int>(comps.size()));
      comps.push_back(detail::fused_ebe_comp(e, static_cast<int>(i), maintained, chain));
    } else {
      ebe_comp.push_back(static_cast<int>(comps.size()));
      comps.push_back(detail::skeleton_ebe_comp(e, chain));
      comps.push_back(detail::tdeg_delay_comp(e, static_cast<int>(i), chain));
    }
  }

  int rm_idx = -1, im_idx = -1;
  if (has_rm) {
    rm_idx = static_cast<int>(comps.size());
    detail::Comp rm = detail::from_element(rm_ctmc(p), chain);
    comps.push_back(std::move(rm));
  }
  if (has_insp) {
    im_idx = static_cast<int>(comps.size());
    detail::Comp im = detail::from_element(im_ctmc(p), chain);
    // a completed action stands the module down from either state
    uint32_t clean = chain.action_id("perform_clean");
    uint32_t replace = chain.action_id("perform_replace");
    im.trs.push_back({0, 0, clean, 1.0, Guard::kNone, -1});
    im.trs.push_back({0, 0, replace, 1.0, Guard::kNone, -1});
    detail::index_comp(im);
    comps.push_back(std::move(im));
  }
  if (has_clean_path)
    comps.push_back(detail::duration_comp(Role::kDelayTcln, t_cln, p.timer_stages,
                                          "trigger_clean", "perform_clean", chain));
  if (has_oh)
    comps.push_back(detail::duration_comp(Role::kDelayTrpl, t_rpl, p.timer_stages,
                                          "trigger_replace", "perform_replace", chain));
  // with fused leaves there are no timing chains to start, so the timers may
  // run from t=0 and the start-up trigger disappears from the product
  const bool armed = opts.fuse_degradation;
  if (has_rep)
    comps.push_back(detail::periodic_comp(Role::kDelayTrp, p.t_rep, p.timer_stages,
                                          "check_clean", chain, armed));
  if (has_oh)
    comps.push_back(detail::periodic_comp(Role::kDelayToh, p.t_oh, p.timer_stages,
                                          "check_replace", chain, armed));
  if (has_insp)
    comps.push_back(detail::periodic_comp(Role::kDelayTin, p.t_insp, p.timer_stages,
                                          "inspect", chain, armed));

  const size_t nc = comps.size();
  out.stats.component_sizes.reserve(nc);
  for (const detail::Comp& c : comps) {
    out.stats.component_sizes.push_back(c.n_states);
    out.stats.product_cardinality *= c.n_states;
  }

  // static participant sets per composite action
  uint32_t max_action = chain.n_action_names();
  std::vector<std::vector<uint32_t>> participants(max_action);
  for (uint32_t ci = 0; ci < nc; ++ci) {
    std::vector<bool> seen(max_action, false);
    for (const auto& t : comps[ci].trs)
      if (t.action && !seen[t.action]) {
        seen[t.action] = true;
        participants[t.action].push_back(ci);
      }
  }
  const int64_t trigger_act = chain.find_action("trigger");

  // every maintenance event is owned by one clock; without that clock the
  // other elements' rows for the event are inert, never a free-running action
  {
    bool present[16] = {};
    for (const detail::Comp& c : comps) present[static_cast<size_t>(c.role)] = true;
    const std::pair<const char*, Role> anchors[] = {
        {"check_clean", Role::kDelayTrp},    {"check_replace", Role::kDelayToh},
        {"inspect", Role::kDelayTin},        {"trigger_clean", Role::kDelayTcln},
        {"perform_clean", Role::kDelayTcln}, {"trigger_replace", Role::kDelayTrpl},
        {"perform_replace", Role::kDelayTrpl}};
    for (const auto& [name, role] : anchors) {
      int64_t a = chain.find_action(name);
      if (a > 0 && !present[static_cast<size_t>(role)]) participants[a].clear();
    }
  }

  // composite states interned as packed keys (bit-packed when narrow enough)
  std::vector<uint32_t> widths(nc), shifts(nc);
  uint32_t total_bits = 0;
  for (size_t i = 0; i < nc; ++i) {
    uint32_t w = 1;
    while ((1u << w) < comps[i].n_states) ++w;
    widths[i] = w;
    shifts[i] = total_bits;
    total_bits += w;
  }
  const bool packed = total_bits <= 64;
  auto pack64 = [&](const std::vector<uint32_t>& locals) {
    uint64_t k = 0;
    for (size_t i = 0; i < nc; ++i) k |= static_cast<uint64_t>(locals[i]) << shifts[i];
    return k;
  };
  auto pack_str = [&](const std::vector<uint32_t>& locals) {
    return std::string(reinterpret_cast<const char*>(locals.data()),
                       locals.size() * sizeof(uint32_t));
  };
  std::unordered_map<uint64_t, uint32_t> index64;
  std::unordered_map<std::string, uint32_t> index_str;
  std::vector<std::vector<uint32_t>> states;

  auto intern = [&](const std::vector<uint32_t>& locals) -> uint32_t {
    uint32_t fresh = static_cast<uint32_t>(states.size());
    uint32_t got;
    if (packed) {
      auto [it, ins] = index64.try_emplace(pack64(locals), fresh);
      got = it->second;
      if (!ins) return got;
    } else {
      auto [it, ins] = index_str.try_emplace(pack_str(locals), fresh);
      got = it->second;
      if (!ins) return got;
    }
    if (states.size() >= opts.max_states) throw budget_error(opts.max_states);
    states.push_back(locals);
    return fresh;
  };

  std::vector<uint32_t> init(nc);
  for (size_t i = 0; i < nc; ++i) init[i] = comps[i].init;
  intern(init);

  const uint32_t top_failed = chain.ap_id("top_failed");
  out.top_failed_ap = static_cast<int64_t>(top_failed);

  GuardContext ctx;
  for (const EbeSpec* e : ebes)
    if (e->abstracted) ctx.exempt.insert(e->id);

  std::vector<uint8_t> failed_flags;
  struct Emitted {
    uint32_t src, dst, action;
    double rate;
  };
  std::vector<Emitted> edges;

  auto guard_ok = [](Guard g, bool trig, bool thresh) {
    switch (g) {
      case Guard::kNone: return true;
      case Guard::kTrigIs0: return !trig;
      case Guard::kTrigIs1: return trig;
      case Guard::kThreshIs0: return !thresh;
      case Guard::kThreshIs1: return thresh;
    }
    return false;
  };

  for (uint32_t cur = 0; cur < states.size(); ++cur) {
    const std::vector<uint32_t> locals = states[cur];

    for (size_t i = 0; i < ebes.size(); ++i)
      ctx.labels[ebes[i]->id] =
          level_label(locals[ebe_comp[i]], ebes[i]->levels);
    const bool trig = guard_trig(ctx);
    const bool thresh = guard_thresh(ctx);
    std::vector<double> accel(ebes.size(), 1.0);
    for (size_t i = 0; i < ebes.size(); ++i)
      for (const GateSpec* g : accel_gates[i])
        if (guard_in(ctx, m, *g)) accel[i] *= g->gamma;

    bool is_failed = guard_fail(ctx, m, m.top_event);
    failed_flags.push_back(is_failed ? 1 : 0);

    // internal moves interleave
    for (uint32_t ci = 0; ci < nc; ++ci)
      for (uint32_t ti : comps[ci].by_src[locals[ci]]) {
        const auto& t = comps[ci].trs[ti];
        if (t.action != 0) continue;
        std::vector<uint32_t> next = locals;
        next[ci] = t.dst;
        double rate = t.rate;
        if (t.accel_ebe >= 0) rate *= accel[t.accel_ebe];
        edges.push_back({cur, intern(next), 0, rate});
      }

    // synchronised actions fire jointly when every participant has an
    // enabled move; guards select at most one move per participant
    for (uint32_t a = 1; a < max_action; ++a) {
      const auto& ps = participants[a];
      if (ps.empty()) continue;
      std::vector<uint32_t> next = locals;
      double rate = (static_cast<int64_t>(a) == trigger_act) ? opts.mu : 1.0;
      bool enabled = true;
      for (uint32_t ci : ps) {
        const detail::Comp::Tr* pick = nullptr;
        for (uint32_t ti : comps[ci].by_src[locals[ci]]) {
          const auto& t = comps[ci].trs[ti];
          if (t.action != a || !guard_ok(t.guard, trig, thresh)) continue;
          pick = &t;
          break;
        }
        if (!pick) {
          enabled = false;
          break;
        }
        next[ci] = pick->dst;
        double r = pick->rate;
        if (pick->accel_ebe >= 0) r *= accel[pick->accel_ebe];
        rate *= r;
      }
      if (!enabled) continue;
      uint32_t dst = intern(next);
      if (dst == cur) continue;  // joint self-loops are no-ops
      edges.push_back({cur, dst, a, rate});
    }
  }

  chain.add_states(static_cast<uint32_t>(states.size()));
  chain.set_initial(0);
  for (uint32_t s = 0; s < failed_flags.size(); ++s)
    if (failed_flags[s]) chain.add_label(s, "top_failed");
  for (const Emitted& e : edges) chain.add_transition(e.src, e.action, e.rate, e.dst);
  chain.finalize();

  out.failed = std::move(failed_flags);
  out.repair_event_rate.assign(chain.n_states(), 0.0);
  out.replace_event_rate.assign(chain.n_states(), 0.0);
  out.fail_entry_rate.assign(chain.n_states(), 0.0);
  int64_t clean_act = chain.find_action("perform_clean");
  int64_t replace_act = chain.find_action("perform_replace");
  for (const Ctmc::Transition& t : chain.all_transitions()) {
    if (static_cast<int64_t>(t.action) == clean_act) out.repair_event_rate[t.src] += t.rate;
    if (static_cast<int64_t>(t.action) == replace_act) out.replace_event_rate[t.src] += t.rate;
    if (!out.failed[t.src] && out.failed[t.dst]) out.fail_entry_rate[t.src] += t.rate;
  }

  out.stats.n_states = chain.n_states();
  out.stats.n_transitions = chain.n_transitions();
  out.stats.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace fmtree
