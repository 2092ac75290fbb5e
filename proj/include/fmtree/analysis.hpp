#pragma once
// Transient analysis by uniformisation: state distribution at a horizon,
// expected cumulative residence times, bounded reachability, and the four
// dependability metrics evaluated on a compiled model.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fmtree/ctmc.hpp"
#include "fmtree/semantics.hpp"

namespace fmtree {

struct TransientOptions {
  double tolerance = 1e-10;
  uint64_t max_steps = 20'000'000;
  // the one-shot start-up trigger fires at a rate many orders above the rest
  // of the chain; skipping it analytically keeps the uniformisation rate sane
  bool collapse_fast_initial = true;
  double fast_ratio = 1e5;
};

namespace detail {

// Poisson(lt) weights, dense from k=0, computed outward from the mode so very
// large lt stays inside double range; normalised to sum to 1.
inline std::vector<double> poisson_window(double lt, uint64_t max_steps, uint64_t* right_out) {
  uint64_t mode = static_cast<uint64_t>(lt);
  uint64_t right = static_cast<uint64_t>(lt + 10.0 * std::sqrt(lt + 40.0) + 40.0);
  if (right > max_steps)
    throw analysis_error("uniformisation needs " + std::to_string(right) +
                         " steps, over the cap of " + std::to_string(max_steps));
  std::vector<double> w(right + 1, 0.0);
  w[mode] = 1.0;
  for (uint64_t k = mode; k > 0; --k) {
    w[k - 1] = w[k] * static_cast<double>(k) / lt;
    if (w[k - 1] < 1e-300) break;  // anything further left underflows to zero
  }
  for (uint64_t k = mode; k < right; ++k) w[k + 1] = w[k] * lt / static_cast<double>(k + 1);
  double sum = 0;
  for (double x : w) sum += x;
  for (double& x : w) x /= sum;
  *right_out = right;
  return w;
}

// v <- v (I + Q/L), the uniformised jump kernel
inline void uniform_step(const Ctmc& c, double inv_lambda, std::vector<double>& v,
                         std::vector<double>& tmp) {
  std::fill(tmp.begin(), tmp.end(), 0.0);
  const uint32_t n = c.n_states();
  for (uint32_t s = 0; s < n; ++s) {
    double vs = v[s];
    if (vs == 0.0) continue;
    double stay = 1.0;
    for (const Ctmc::Transition& t : c.transitions(s)) {
      double p = t.rate * inv_lambda;
      tmp[t.dst] += vs * p;
      stay -= p;
    }
    if (stay > 0.0) tmp[s] += vs * stay;
  }
  v.swap(tmp);
}

// fills pi with the distribution at t and cum with the expected residence
// times over [0,t]; either output may be null
inline void uniformize(const Ctmc& c, double t, const TransientOptions& o, std::vector<double>* pi,
                       std::vector<double>* cum) {
  const uint32_t n = c.n_states();
  if (pi) pi->assign(n, 0.0);
  if (cum) cum->assign(n, 0.0);
  std::vector<double> v(n, 0.0);
  v[c.initial()] = 1.0;
  if (t <= 0.0) {
    if (pi) (*pi)[c.initial()] = 1.0;
    return;
  }
  const double lambda = c.max_exit_rate();
  if (lambda <= 0.0) {
    if (pi) (*pi)[c.initial()] = 1.0;
    if (cum) (*cum)[c.initial()] = t;
    return;
  }
  uint64_t right = 0;
  std::vector<double> w = poisson_window(lambda * t, o.max_steps, &right);
  std::vector<double> tmp(n, 0.0);
  const double inv_lambda = 1.0 / lambda;
  double W = 0.0;
  for (uint64_t k = 0;; ++k) {
    double wk = w[k];
    if (pi && wk != 0.0)
      for (uint32_t s = 0; s < n; ++s) (*pi)[s] += wk * v[s];
    W += wk;
    if (cum) {
      double f = (1.0 - W) * inv_lambda;
      if (f > 0.0)
        for (uint32_t s = 0; s < n; ++s) (*cum)[s] += f * v[s];
    }
    if (k == right) break;
    double tail = 1.0 - W;
    if (!cum && tail < o.tolerance * 0.1) break;
    // residence mass still to come is bounded by tail * steps / lambda
    if (cum && tail * static_cast<double>(right - k) * inv_lambda < o.tolerance * 1e-3 * t &&
        (!pi || tail < o.tolerance * 0.1))
      break;
    uniform_step(c, inv_lambda, v, tmp);
  }
}

// walks forward from the initial state over one-successor states whose exit
// rate dwarfs both the rest of the chain and the horizon
inline uint32_t effective_root(const Ctmc& c, double t, const TransientOptions& o) {
  uint32_t root = c.initial();
  if (!o.collapse_fast_initial || t <= 0.0) return root;
  for (uint32_t hops = 0; hops < c.n_states(); ++hops) {
    auto tr = c.transitions(root);
    if (tr.empty()) break;
    uint32_t dst = tr.front().dst;
    bool single = true;
    for (const Ctmc::Transition& x : tr)
      if (x.dst != dst) {
        single = false;
        break;
      }
    if (!single || dst == root) break;
    double exit = c.exit_rate(root);
    if (exit * t < o.fast_ratio) break;
    // compare against everything live once the root is left behind
    std::vector<uint8_t> seen(c.n_states(), 0);
    std::vector<uint32_t> order{dst};
    seen[dst] = 1;
    double others = 0.0;
    for (size_t q = 0; q < order.size(); ++q) {
      others = std::max(others, c.exit_rate(order[q]));
      for (const Ctmc::Transition& x : c.transitions(order[q]))
        if (!seen[x.dst]) {
          seen[x.dst] = 1;
          order.push_back(x.dst);
        }
    }
    if (exit < o.fast_ratio * others) break;
    root = dst;
  }
  return root;
}

inline void run_from_root(const Ctmc& c, double t, const TransientOptions& o,
                          std::vector<double>* pi, std::vector<double>* cum) {
  uint32_t root = effective_root(c, t, o);
  if (root == c.initial()) {
    uniformize(c, t, o, pi, cum);
    return;
  }
  Restricted r = restrict_reachable(c, root);
  std::vector<double> rpi, rcum;
  uniformize(r.chain, t, o, pi ? &rpi : nullptr, cum ? &rcum : nullptr);
  if (pi) pi->assign(c.n_states(), 0.0);
  if (cum) cum->assign(c.n_states(), 0.0);
  for (uint32_t s = 0; s < c.n_states(); ++s) {
    uint32_t m = r.index_map[s];
    if (m == UINT32_MAX) continue;
    if (pi) (*pi)[s] = rpi[m];
    if (cum) (*cum)[s] = rcum[m];
  }
}

}  // namespace detail

// state distribution at time t, indexed like the input chain
inline std::vector<double> transient(const Ctmc& c, double t, const TransientOptions& o = {}) {
  if (t < 0) throw std::invalid_argument("transient: negative horizon");
  std::vector<double> pi;
  detail::run_from_root(c, t, o, &pi, nullptr);
  return pi;
}

// expected time spent in each state over [0, t]
inline std::vector<double> cumulative(const Ctmc& c, double t, const TransientOptions& o = {}) {
  if (t < 0) throw std::invalid_argument("cumulative: negative horizon");
  std::vector<double> cum;
  detail::run_from_root(c, t, o, nullptr, &cum);
  return cum;
}

// probability that the chain has entered the target set by time t; targets
// are made absorbing so later escapes do not count
inline double bounded_reach(const Ctmc& c, const std::vector<uint8_t>& target, double t,
                            const TransientOptions& o = {}) {
  if (target.size() != c.n_states())
    throw std::invalid_argument("bounded_reach: target mask size mismatch");
  Ctmc absorbed;
  absorbed.add_states(c.n_states());
  absorbed.set_initial(c.initial());
  for (const Ctmc::Transition& tr : c.all_transitions())
    if (!target[tr.src]) absorbed.add_transition(tr.src, 0u, tr.rate, tr.dst);
  absorbed.finalize();
  std::vector<double> pi = transient(absorbed, t, o);
  double p = 0.0;
  for (uint32_t s = 0; s < c.n_states(); ++s)
    if (target[s]) p += pi[s];
  return p;
}

// ----------------------------------------------------------------- metrics --

enum class Metric { kReliability, kAvailability, kExpectedCost, kExpectedFailures };

inline const char* metric_name(Metric m) {
  switch (m) {
    case Metric::kReliability: return "reliability";
    case Metric::kAvailability: return "availability";
    case Metric::kExpectedCost: return "expected_cost";
    case Metric::kExpectedFailures: return "expected_failures";
  }
  return "?";
}

inline Metric metric_from_name(std::string_view s) {
  if (s == "reliability") return Metric::kReliability;
  if (s == "availability") return Metric::kAvailability;
  if (s == "expected_cost") return Metric::kExpectedCost;
  if (s == "expected_failures") return Metric::kExpectedFailures;
  throw std::invalid_argument("unknown metric '" + std::string(s) + "'");
}

// probability the top event has not occurred anywhere in [0, t]
inline double reliability(const CompiledModel& cm, double t, const TransientOptions& o = {}) {
  if (t <= 0) return 1.0;
  return 1.0 - bounded_reach(cm.chain, cm.failed, t, o);
}

// expected fraction of [0, t] spent with the top event not failed
inline double availability(const CompiledModel& cm, double t, const TransientOptions& o = {}) {
  if (t <= 0) return 1.0;
  std::vector<double> cum = cumulative(cm.chain, t, o);
  double up = 0.0;
  for (uint32_t s = 0; s < cm.chain.n_states(); ++s)
    if (!cm.failed[s]) up += cum[s];
  return up / t;
}

// expected number of top-event failures in [0, t]
inline double expected_failures(const CompiledModel& cm, double t, const TransientOptions& o = {}) {
  if (t <= 0) return 0.0;
  std::vector<double> cum = cumulative(cm.chain, t, o);
  double n = 0.0;
  for (uint32_t s = 0; s < cm.chain.n_states(); ++s) n += cum[s] * cm.fail_entry_rate[s];
  return n;
}

// operational + downtime cost accrues with residence time, repair and
// replacement costs with completion events
inline double expected_cost(const CompiledModel& cm, double t, const TransientOptions& o = {}) {
  if (t <= 0) return 0.0;
  std::vector<double> cum = cumulative(cm.chain, t, o);
  double total = 0.0;
  for (uint32_t s = 0; s < cm.chain.n_states(); ++s) {
    double rate = cm.costs.operational_per_day + (cm.failed[s] ? cm.costs.failure_per_day : 0.0) +
                  cm.costs.repair * cm.repair_event_rate[s] +
                  cm.costs.replace * cm.replace_event_rate[s];
    total += cum[s] * rate;
  }
  return total;
}

struct MetricResult {
  Metric metric = Metric::kReliability;
  double horizon = 0;
  double value = 0;
  uint64_t states = 0;
  double wall_ms = 0;
};

inline MetricResult compute_metric(const CompiledModel& cm, Metric m, double horizon,
                                   const TransientOptions& o = {}) {
  auto t0 = std::chrono::steady_clock::now();
  MetricResult r;
  r.metric = m;
  r.horizon = horizon;
  r.states = cm.chain.n_states();
  switch (m) {
    case Metric::kReliability: r.value = reliability(cm, horizon, o); break;
    case Metric::kAvailability: r.value = availability(cm, horizon, o); break;
    case Metric::kExpectedCost: r.value = expected_cost(cm, horizon, o); break;
    case Metric::kExpectedFailures: r.value = expected_failures(cm, horizon, o); break;
  }
  r.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// rate of the single exponential whose failure probability at t matches de
inline double equivalent_failure_rate(double de, double t) {
  if (!(t > 0)) throw std::invalid_argument("equivalent_failure_rate: horizon must be positive");
  if (!(de >= 0) || de >= 1)
    throw std::invalid_argument("equivalent_failure_rate: probability must lie in [0, 1)");
  return -std::log1p(-de) / t;
}

}  // namespace fmtree
