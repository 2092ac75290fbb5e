#pragma once
// Sparse labelled CTMCs: storage, Erlang delay chains, synchronised
// composition and reachability restriction. All rates are per day.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fmtree/base.hpp"

namespace fmtree {

// Finite labelled CTMC. Action label id 0 is reserved for internal
// (unsynchronised) moves. At most 64 atomic propositions per chain;
// states carry them as a bitmask.
class Ctmc {
 public:
  struct Transition {
    uint32_t src = 0;
    uint32_t dst = 0;
    uint32_t action = 0;
    double rate = 0.0;
  };

  Ctmc() { action_names_.emplace_back(); }

  uint32_t add_state() {
    label_masks_.push_back(0);
    finalized_ = false;
    return static_cast<uint32_t>(label_masks_.size() - 1);
  }

  uint32_t add_states(uint32_t count) {
    uint32_t first = static_cast<uint32_t>(label_masks_.size());
    label_masks_.resize(label_masks_.size() + count, 0);
    finalized_ = false;
    return first;
  }

  void set_initial(uint32_t s) { initial_ = s; }
  uint32_t initial() const { return initial_; }
  uint32_t n_states() const { return static_cast<uint32_t>(label_masks_.size()); }

  uint32_t action_id(std::string_view name) {
    auto it = action_index_.find(std::string(name));
    if (it != action_index_.end()) return it->second;
    action_names_.emplace_back(name);
    uint32_t id = static_cast<uint32_t>(action_names_.size() - 1);
    action_index_.emplace(std::string(name), id);
    return id;
  }

  // -1 if the name was never interned
  int64_t find_action(std::string_view name) const {
    auto it = action_index_.find(std::string(name));
    return it == action_index_.end() ? int64_t{-1} : static_cast<int64_t>(it->second);
  }

  const std::string& action_name(uint32_t id) const { return action_names_[id]; }
  uint32_t n_action_names() const { return static_cast<uint32_t>(action_names_.size()); }

  uint32_t ap_id(std::string_view name) {
    auto it = ap_index_.find(std::string(name));
    if (it != ap_index_.end()) return it->second;
    if (ap_names_.size() >= 64) throw analysis_error("too many atomic propositions (max 64)");
    ap_names_.emplace_back(name);
    uint32_t id = static_cast<uint32_t>(ap_names_.size() - 1);
    ap_index_.emplace(std::string(name), id);
    return id;
  }

  int64_t find_ap(std::string_view name) const {
    auto it = ap_index_.find(std::string(name));
    return it == ap_index_.end() ? int64_t{-1} : static_cast<int64_t>(it->second);
  }

  const std::string& ap_name(uint32_t id) const { return ap_names_[id]; }
  uint32_t n_aps() const { return static_cast<uint32_t>(ap_names_.size()); }

  void add_label(uint32_t s, std::string_view ap) { label_masks_[s] |= 1ull << ap_id(ap); }
  void set_label_mask(uint32_t s, uint64_t mask) { label_masks_[s] = mask; }
  uint64_t label_mask(uint32_t s) const { return label_masks_[s]; }

  bool has_label(uint32_t s, std::string_view ap) const {
    int64_t id = find_ap(ap);
    return id >= 0 && (label_masks_[s] >> id) & 1;
  }

  void add_transition(uint32_t src, std::string_view action, double rate, uint32_t dst) {
    add_transition(src, action.empty() ? 0 : action_id(action), rate, dst);
  }

  void add_transition(uint32_t src, uint32_t action_id, double rate, uint32_t dst) {
    if (!(rate > 0.0)) throw std::invalid_argument("transition rate must be positive");
    transitions_.push_back({src, dst, action_id, rate});
    finalized_ = false;
  }

  // Sorts transitions by (src, action, dst) and folds duplicates by summing
  // their rates. Must be called before any query that walks transitions.
  void finalize() {
    if (finalized_) return;
    std::sort(transitions_.begin(), transitions_.end(), [](const Transition& a, const Transition& b) {
      if (a.src != b.src) return a.src < b.src;
      if (a.action != b.action) return a.action < b.action;
      return a.dst < b.dst;
    });
    size_t out = 0;
    for (size_t i = 0; i < transitions_.size(); ++i) {
      if (out > 0) {
        Transition& prev = transitions_[out - 1];
        const Transition& cur = transitions_[i];
        if (prev.src == cur.src && prev.action == cur.action && prev.dst == cur.dst) {
          prev.rate += cur.rate;
          continue;
        }
      }
      transitions_[out++] = transitions_[i];
    }
    transitions_.resize(out);
    row_ptr_.assign(n_states() + 1, 0);
    for (const Transition& t : transitions_) row_ptr_[t.src + 1]++;
    for (size_t s = 1; s < row_ptr_.size(); ++s) row_ptr_[s] += row_ptr_[s - 1];
    finalized_ = true;
  }

  bool finalized() const { return finalized_; }

  std::span<const Transition> transitions(uint32_t s) const {
    return {transitions_.data() + row_ptr_[s], transitions_.data() + row_ptr_[s + 1]};
  }

  std::span<const Transition> all_transitions() const {
    return {transitions_.data(), transitions_.size()};
  }

  size_t n_transitions() const { return transitions_.size(); }

  double exit_rate(uint32_t s) const {
    double sum = 0;
    for (const Transition& t : transitions(s)) sum += t.rate;
    return sum;
  }

  double max_exit_rate() const {
    double m = 0;
    for (uint32_t s = 0; s < n_states(); ++s) m = std::max(m, exit_rate(s));
    return m;
  }

  // action names appearing on at least one transition (internal excluded)
  std::vector<std::string> act() const {
    std::vector<bool> seen(action_names_.size(), false);
    for (const Transition& t : transitions_) seen[t.action] = true;
    std::vector<std::string> out;
    for (size_t i = 1; i < action_names_.size(); ++i)
      if (seen[i]) out.push_back(action_names_[i]);
    return out;
  }

  // aggregate rate matrix entry, summed over actions
  double rate(uint32_t src, uint32_t dst) const {
    double sum = 0;
    for (const Transition& t : transitions(src))
      if (t.dst == dst) sum += t.rate;
    return sum;
  }

 private:
  uint32_t initial_ = 0;
  bool finalized_ = false;
  std::vector<uint64_t> label_masks_;
  std::vector<Transition> transitions_;
  std::vector<uint32_t> row_ptr_;
  std::vector<std::string> action_names_;
  std::unordered_map<std::string, uint32_t> action_index_;
  std::vector<std::string> ap_names_;
  std::unordered_map<std::string, uint32_t> ap_index_;
};

// Cumulative distribution of an Erlang(k, lambda) sum at time t, evaluated
// through the Poisson tail so both tails keep full relative precision.
inline double erlang_cdf(double t, uint32_t k, double lambda) {
  if (k == 0 || !(lambda > 0)) throw std::invalid_argument("erlang_cdf: need k >= 1, lambda > 0");
  if (!(t > 0)) return 0.0;
  double x = lambda * t;
  if (x >= static_cast<double>(k)) {
    // cdf = 1 - P(Pois(x) <= k-1); sum the left tail downward from its peak
    double term = std::exp(-x + (k - 1) * std::log(x) - std::lgamma(static_cast<double>(k)));
    double q = 0;
    for (uint32_t n = k - 1;; --n) {
      q += term;
      if (n == 0 || term < q * 1e-20) break;
      term *= n / x;
    }
    return 1.0 - q;
  }
  // cdf = P(Pois(x) >= k); right tail converges geometrically since x < k
  double log_term = -x + k * std::log(x) - std::lgamma(static_cast<double>(k) + 1);
  if (log_term < -745.0) return 0.0;  // leading term underflows, cdf < ~1e-300
  double term = std::exp(log_term);
  double s = 0;
  for (uint32_t n = k;; ++n) {
    s += term;
    term *= x / (n + 1);
    if (term == 0.0 || term < s * 1e-20) break;
  }
  return s;
}

// Erlang approximation of a deterministic delay T using N stages.
struct DelaySpec {
  double T = 1.0;        // delay being approximated, days
  uint32_t N = 1;        // number of Erlang stages
  bool extended = false; // extended variant supports external resets
  double mu = 1e6;       // start-up rate of the trigger hop, per day
};

namespace detail {
inline Ctmc make_delay(const DelaySpec& d, const std::vector<std::string>& reset_actions) {
  if (!(d.T > 0) || d.N == 0 || !(d.mu > 0)) throw std::invalid_argument("delay module: bad spec");
  Ctmc c;
  c.add_states(d.N + 2);  // d0 (dormant), d1..dN (stages), d_{N+1} (elapsed)
  c.set_initial(0);
  c.add_label(d.N + 1, "elapsed");
  const double r = static_cast<double>(d.N) / d.T;
  c.add_transition(0u, "trigger", d.mu, 1u);
  for (uint32_t i = 1; i <= d.N; ++i) c.add_transition(i, "move", r, i + 1);
  c.add_transition(d.N + 1, "move", r, 1u);
  for (const std::string& a : reset_actions)
    for (uint32_t i = 2; i <= d.N + 1; ++i) c.add_transition(i, a, 1.0, 1u);
  c.finalize();
  return c;
}
}  // namespace detail

// d0 --trigger(mu)--> d1, stage steps and the wrap-around d_{N+1} -> d1 all
// carry "move" at rate N/T; only d_{N+1} is labelled "elapsed".
inline Ctmc delay_module(const DelaySpec& d) {
  if (d.extended) throw std::invalid_argument("delay_module: spec wants the extended variant");
  return detail::make_delay(d, {});
}

// Adds restart rows (d_i, act, d1) at rate 1 for 2 <= i <= N+1 and each reset
// action, so an external event can roll the delay back to its first stage.
// Rate 1 leaves the synchronised partner's rate in charge of the joint move.
inline Ctmc delay_module_ext(const DelaySpec& d, const std::vector<std::string>& reset_actions) {
  if (!d.extended) throw std::invalid_argument("delay_module_ext: spec wants the plain variant");
  if (reset_actions.empty()) throw std::invalid_argument("delay_module_ext: no reset actions");
  return detail::make_delay(d, reset_actions);
}

struct Composed {
  Ctmc chain;
  // composed state -> (left component state, right component state)
  std::vector<std::pair<uint32_t, uint32_t>> provenance;
};

// Parallel composition restricted to the reachable product. Actions named in
// `sync` fire jointly in both operands with the product of their rates;
// everything else (including internal moves) interleaves. Labels are unioned
// by name. Requires every sync action to occur in both operands.
inline Composed compose(const Ctmc& a, const Ctmc& b, const std::vector<std::string>& sync) {
  if (!a.finalized() || !b.finalized()) throw std::logic_error("compose: operands not finalized");
  std::vector<std::string> act_a = a.act(), act_b = b.act();
  for (const std::string& s : sync) {
    bool in_a = std::find(act_a.begin(), act_a.end(), s) != act_a.end();
    bool in_b = std::find(act_b.begin(), act_b.end(), s) != act_b.end();
    if (!in_a || !in_b)
      throw std::invalid_argument("compose: sync action '" + s + "' missing from " +
                                  (in_a ? "right" : "left") + " operand");
  }

  Composed out;
  Ctmc& c = out.chain;

  // action id remaps into the composed table; sync flags by source id
  std::vector<uint32_t> map_a(a.n_action_names()), map_b(b.n_action_names());
  std::vector<bool> sync_a(a.n_action_names(), false), sync_b(b.n_action_names(), false);
  for (uint32_t i = 1; i < a.n_action_names(); ++i) map_a[i] = c.action_id(a.action_name(i));
  for (uint32_t i = 1; i < b.n_action_names(); ++i) map_b[i] = c.action_id(b.action_name(i));
  for (const std::string& s : sync) {
    sync_a[static_cast<uint32_t>(a.find_action(s))] = true;
    sync_b[static_cast<uint32_t>(b.find_action(s))] = true;
  }
  // b action id -> a action id for joint matching
  std::vector<int64_t> b_to_a(b.n_action_names(), -1);
  for (uint32_t i = 1; i < b.n_action_names(); ++i) b_to_a[i] = a.find_action(b.action_name(i));

  std::vector<uint32_t> ap_a(a.n_aps()), ap_b(b.n_aps());
  for (uint32_t i = 0; i < a.n_aps(); ++i) ap_a[i] = c.ap_id(a.ap_name(i));
  for (uint32_t i = 0; i < b.n_aps(); ++i) ap_b[i] = c.ap_id(b.ap_name(i));
  auto remap_mask = [](uint64_t mask, const std::vector<uint32_t>& map) {
    uint64_t out_mask = 0;
    while (mask) {
      int bit = std::countr_zero(mask);
      out_mask |= 1ull << map[bit];
      mask &= mask - 1;
    }
    return out_mask;
  };

  std::unordered_map<uint64_t, uint32_t> index;
  auto key = [](uint32_t i, uint32_t j) { return (static_cast<uint64_t>(i) << 32) | j; };
  auto intern = [&](uint32_t i, uint32_t j) {
    auto [it, fresh] = index.try_emplace(key(i, j), static_cast<uint32_t>(out.provenance.size()));
    if (fresh) {
      out.provenance.emplace_back(i, j);
      uint32_t s = c.add_state();
      c.set_label_mask(s, remap_mask(a.label_mask(i), ap_a) | remap_mask(b.label_mask(j), ap_b));
    }
    return it->second;
  };

  intern(a.initial(), b.initial());
  c.set_initial(0);
  for (uint32_t cur = 0; cur < out.provenance.size(); ++cur) {
    auto [i, j] = out.provenance[cur];
    for (const Ctmc::Transition& t : a.transitions(i)) {
      if (t.action != 0 && sync_a[t.action]) {
        for (const Ctmc::Transition& u : b.transitions(j))
          if (u.action != 0 && b_to_a[u.action] == t.action)
            c.add_transition(cur, map_a[t.action], t.rate * u.rate, intern(t.dst, u.dst));
      } else {
        c.add_transition(cur, t.action ? map_a[t.action] : 0, t.rate, intern(t.dst, j));
      }
    }
    for (const Ctmc::Transition& u : b.transitions(j))
      if (u.action == 0 || !sync_b[u.action])
        c.add_transition(cur, u.action ? map_b[u.action] : 0, u.rate, intern(i, u.dst));
  }
  c.finalize();
  return out;
}

struct Restricted {
  Ctmc chain;
  // old index -> new index, UINT32_MAX for unreachable states
  std::vector<uint32_t> index_map;
};

inline Restricted restrict_reachable(const Ctmc& c, uint32_t root) {
  if (!c.finalized()) throw std::logic_error("restrict_reachable: chain not finalized");
  constexpr uint32_t kNone = UINT32_MAX;
  Restricted out;
  out.index_map.assign(c.n_states(), kNone);
  std::vector<uint32_t> order;
  order.push_back(root);
  out.index_map[root] = 0;
  for (size_t q = 0; q < order.size(); ++q)
    for (const Ctmc::Transition& t : c.transitions(order[q]))
      if (out.index_map[t.dst] == kNone) {
        out.index_map[t.dst] = static_cast<uint32_t>(order.size());
        order.push_back(t.dst);
      }

  Ctmc& r = out.chain;
  r.add_states(static_cast<uint32_t>(order.size()));
  r.set_initial(0);
  for (uint32_t ap = 0; ap < c.n_aps(); ++ap) r.ap_id(c.ap_name(ap));
  std::vector<uint32_t> act_map(c.n_action_names(), 0);
  for (uint32_t i = 1; i < c.n_action_names(); ++i) act_map[i] = r.action_id(c.action_name(i));
  for (uint32_t n = 0; n < order.size(); ++n) {
    uint32_t old = order[n];
    r.set_label_mask(n, c.label_mask(old));
    for (const Ctmc::Transition& t : c.transitions(old))
      r.add_transition(n, act_map[t.action], t.rate, out.index_map[t.dst]);
  }
  r.finalize();
  return out;
}

inline Restricted restrict_reachable(const Ctmc& c) { return restrict_reachable(c, c.initial()); }

// Plain-text edge list "src action rate dst" plus a label table; the exact
// format is pinned by golden tests.
inline void dump(const Ctmc& c, std::ostream& os) {
  os << "states " << c.n_states() << "\n";
  os << "initial " << c.initial() << "\n";
  for (const Ctmc::Transition& t : c.all_transitions()) {
    os << t.src << ' ' << (t.action ? c.action_name(t.action) : "-") << ' ' << fmt_double(t.rate)
       << ' ' << t.dst << "\n";
  }
  os << "labels\n";
  for (uint32_t s = 0; s < c.n_states(); ++s) {
    uint64_t mask = c.label_mask(s);
    if (!mask) continue;
    os << s;
    while (mask) {
      int bit = std::countr_zero(mask);
      os << ' ' << c.ap_name(static_cast<uint32_t>(bit));
      mask &= mask - 1;
    }
    os << "\n";
  }
}

}  // namespace fmtree
