#pragma once
// Discrete-event Monte Carlo over the tree itself, no state space built.
// Two modes: true deterministic policy delays (the semantics the chain
// approximates), and erlang_mode, which samples exactly the synchronised
// chain's law so the estimates converge on the numeric engine.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "fmtree/model.hpp"
#include "fmtree/semantics.hpp"

namespace fmtree {

struct SimConfig {
  uint64_t runs = 10000;
  double horizon = 365.0;
  uint64_t seed = 0;
  double confidence = 0.99;
  bool erlang_mode = false;
};

struct Estimate {
  double mean = 0;
  double stddev = 0;      // sample standard deviation across runs
  double half_width = 0;  // normal-quantile CI at the configured confidence
};

struct SimResult {
  Estimate reliability, availability, expected_cost, expected_failures;
  uint64_t runs = 0;
  double wall_ms = 0;
};

namespace detail {

// xoshiro256++, seeded through splitmix64; one independent stream per run
struct Rng {
  uint64_t s[4];

  static uint64_t splitmix(uint64_t& x) {
    uint64_t z = (x += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  Rng(uint64_t seed, uint64_t stream) {
    uint64_t x = seed ^ (0x8764000B02BCF1E5ull * (stream + 1));
    for (uint64_t& w : s) w = splitmix(x);
  }
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t next() {
    uint64_t r = rotl(s[0] + s[3], 23) + s[0];
    uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return r;
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }  // [0,1)
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }
};

// inverse standard normal cdf (Acklam's rational approximation, ~1e-9)
inline double inv_normal(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > 1 - plow) return -inv_normal(1 - p);
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

inline double pairwise_sum(const double* v, size_t n) {
  if (n <= 64) {
    double s = 0;
    for (size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  size_t h = n / 2;
  return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

// Static description shared by every run: the leaves, the dependency gates,
// and the policy-derived clock set, arranged exactly as the compiler does.
struct SimPlan {
  struct Leaf {
    std::string id;
    uint32_t levels;
    double stage_time;   // t_deg / levels
    double repair_rate;  // abstracted stand-ins only
    bool maintained;
    bool exempt;   // abstracted: invisible to trig/thresh
    bool in_cone;  // under the top event, counts toward top_failed
    std::vector<std::pair<int, double>> accel;  // (trigger leaf ordinal, gamma)
  };
  std::vector<Leaf> leaves;
  bool has_rep = false, has_oh = false, has_insp = false;
  bool has_clean_path = false;
  double t_rep = 0, t_oh = 0, t_insp = 0;
  double t_cln = 0, t_rpl = 0;
  uint32_t stages = 1;
  CostModel costs;
};

inline SimPlan sim_plan(const FmtModel& model, const CostModel& costs) {
  const FmtModel m = to_dag(model);
  if (!is_valid(validate(m))) throw std::invalid_argument("simulate: model is not well-formed");
  SimPlan plan;
  plan.costs = costs;

  std::vector<const EbeSpec*> ebes;
  std::unordered_map<std::string, int> ordinal;
  for (const NodeSpec& n : m.nodes())
    if (const EbeSpec* e = std::get_if<EbeSpec>(&n))
      if (e->duplicate_of.empty()) {
        ordinal[e->id] = static_cast<int>(ebes.size());
        ebes.push_back(e);
      }

  bool any_maintained = false;
  for (const EbeSpec* e : ebes)
    if (!e->abstracted) {
      any_maintained = true;
      plan.t_cln = std::max(plan.t_cln, e->t_clean);
      plan.t_rpl = std::max(plan.t_rpl, e->t_replace);
    }
  const MaintenancePolicy& p = m.policy;
  plan.has_rep = any_maintained && p.t_rep != kInf;
  plan.has_oh = any_maintained && p.t_oh != kInf;
  plan.has_insp = any_maintained && p.t_insp != kInf;
  plan.has_clean_path = plan.has_rep || plan.has_insp;
  plan.t_rep = p.t_rep;
  plan.t_oh = p.t_oh;
  plan.t_insp = p.t_insp;
  plan.stages = p.timer_stages;
  const bool has_rm = plan.has_rep || plan.has_oh || plan.has_insp;

  // leaves under the top event (dependency triggers resolved to originals)
  std::unordered_set<std::string> cone;
  std::vector<std::string> stack{m.top_event};
  while (!stack.empty()) {
    std::string id = stack.back();
    stack.pop_back();
    if (const EbeSpec* e = m.ebe(id)) {
      cone.insert(e->duplicate_of.empty() ? e->id : e->duplicate_of);
    } else if (const GateSpec* g = m.gate(id); g && g->kind == GateSpec::Kind::kOr) {
      for (const std::string& in : g->inputs) stack.push_back(in);
    }
  }

  for (const EbeSpec* e : ebes) {
    SimPlan::Leaf lf;
    lf.id = e->id;
    lf.levels = e->levels;
    lf.stage_time = e->t_deg / e->levels;
    lf.repair_rate = e->abstracted ? e->repair_rate : 0.0;
    lf.maintained = has_rm && !e->abstracted;
    lf.exempt = e->abstracted;
    lf.in_cone = cone.count(e->id) > 0;
    plan.leaves.push_back(lf);
  }
  for (const NodeSpec& n : m.nodes()) {
    const GateSpec* g = std::get_if<GateSpec>(&n);
    if (!g || g->kind != GateSpec::Kind::kRdep || g->inputs.empty()) continue;
    const EbeSpec* trig = m.ebe(g->inputs[0]);
    if (!trig) continue;
    const std::string& orig = trig->duplicate_of.empty() ? trig->id : trig->duplicate_of;
    auto it = ordinal.find(orig);
    if (it == ordinal.end()) continue;
    for (const std::string& d : g->dependents) {
      auto dep = ordinal.find(d);
      if (dep != ordinal.end()) plan.leaves[dep->second].accel.push_back({it->second, g->gamma});
    }
  }
  return plan;
}

// ticket for one run: every quantity the aggregation needs
struct RunStats {
  double unreliable = 0;  // 1 if the top event occurred before the horizon
  double downtime = 0;    // fraction of the horizon spent failed
  double cost = 0;
  double failures = 0;
};

enum : int { kRmIdle = 0, kRmClean = 1, kRmReplace = 2 };

struct SimState {
  std::vector<uint32_t> level;
  int rm = kRmIdle;
  bool im_pending = false;
  uint32_t trp = 0, toh = 0, tin = 0;  // armed timer stage, 0..stages
  int cln = -1, rpl = -1;              // duration stage, -1 = idle
  int n_started = 0;                   // non-exempt leaves past new
  int n_mid = 0;                       // non-exempt leaves strictly between
  int n_failed = 0;                    // cone leaves at their failed level
};

struct SimEngine {
  const SimPlan& plan;
  double horizon;
  SimState st;
  // run accounting
  double now = 0, first_fail = -1, down = 0, last = 0;
  long fails = 0, cleans = 0, replaces = 0;

  explicit SimEngine(const SimPlan& pl, double h) : plan(pl), horizon(h) {}

  bool trig() const { return st.n_started > 0; }
  bool thresh() const { return st.n_mid > 0; }
  bool failed() const { return st.n_failed > 0; }

  double accel(size_t i) const {
    double a = 1.0;
    for (const auto& [trg, gamma] : plan.leaves[i].accel)
      if (st.level[trg] >= plan.leaves[trg].levels) a *= gamma;
    return a;
  }

  void reset() {
    st.level.assign(plan.leaves.size(), 0);
    st.rm = kRmIdle;
    st.im_pending = false;
    st.trp = st.toh = st.tin = 0;
    st.cln = st.rpl = -1;
    st.n_started = st.n_mid = st.n_failed = 0;
    now = 0;
    first_fail = -1;
    down = 0;
    last = 0;
    fails = cleans = replaces = 0;
  }

  void set_level(size_t i, uint32_t to) {
    const SimPlan::Leaf& lf = plan.leaves[i];
    uint32_t from = st.level[i];
    if (!lf.exempt) {
      st.n_started += (to > 0) - (from > 0);
      st.n_mid += (to > 0 && to < lf.levels) - (from > 0 && from < lf.levels);
    }
    if (lf.in_cone) st.n_failed += (to >= lf.levels) - (from >= lf.levels);
    st.level[i] = to;
  }

  void advance_to(double t) {
    if (failed()) down += t - last;
    last = t;
    now = t;
  }

  void note_fail_edge(bool was_failed) {
    if (!was_failed && failed()) {
      ++fails;
      if (first_fail < 0) first_fail = now;
    }
  }

  void apply_clean() {
    bool was = failed();
    for (size_t i = 0; i < plan.leaves.size(); ++i)
      if (plan.leaves[i].maintained && st.level[i] > 0) set_level(i, st.level[i] - 1);
    st.rm = kRmIdle;
    st.im_pending = false;
    st.cln = -1;
    ++cleans;
    note_fail_edge(was);
  }
  void apply_replace() {
    bool was = failed();
    for (size_t i = 0; i < plan.leaves.size(); ++i)
      if (plan.leaves[i].maintained && st.level[i] > 0) set_level(i, 0);
    st.rm = kRmIdle;
    st.im_pending = false;
    st.rpl = -1;
    ++replaces;
    note_fail_edge(was);
  }
  void apply_check_clean() { st.rm = trig() ? kRmClean : kRmIdle; }
  void apply_check_replace() { st.rm = trig() ? kRmReplace : kRmIdle; }
  void apply_inspect() {
    if (thresh()) {
      st.rm = kRmClean;
      st.im_pending = true;
    }
  }
  void apply_degrade(size_t i) {
    bool was = failed();
    set_level(i, st.level[i] + 1);
    note_fail_edge(was);
  }

  RunStats finish() {
    advance_to(horizon);
    RunStats r;
    r.unreliable = (first_fail >= 0 && first_fail <= horizon) ? 1.0 : 0.0;
    r.downtime = down / horizon;
    r.failures = static_cast<double>(fails);
    r.cost = plan.costs.operational_per_day * horizon + plan.costs.failure_per_day * down +
             plan.costs.repair * static_cast<double>(cleans) +
             plan.costs.replace * static_cast<double>(replaces);
    return r;
  }
};

// --------------------------------------------------------------- erlang ----

// competing exponentials over exactly the composed chain's enabled moves
inline RunStats run_erlang(const SimPlan& plan, double horizon, Rng& rng) {
  SimEngine e(plan, horizon);
  e.reset();
  const uint32_t K = plan.stages;
  std::vector<double> rates;
  std::vector<int> moves;  // encoded move ids
  // move encoding: 0..L-1 degrade leaf, L..2L-1 stand-in return, then clocks
  const int L = static_cast<int>(plan.leaves.size());
  enum : int { kTrpStep, kTohStep, kTinStep, kClnStep, kRplStep, kClockEnd };

  while (true) {
    rates.clear();
    moves.clear();
    for (int i = 0; i < L; ++i) {
      const SimPlan::Leaf& lf = plan.leaves[i];
      if (e.st.level[i] < lf.levels) {
        rates.push_back(e.accel(i) / lf.stage_time);
        moves.push_back(i);
      } else if (lf.repair_rate > 0) {
        rates.push_back(lf.repair_rate);
        moves.push_back(L + i);
      }
    }
    const bool rm_idle = e.st.rm == kRmIdle;
    if (plan.has_rep && (e.st.trp < K || rm_idle)) {
      rates.push_back(K / plan.t_rep);
      moves.push_back(2 * L + kTrpStep);
    }
    if (plan.has_oh && (e.st.toh < K || rm_idle)) {
      rates.push_back(K / plan.t_oh);
      moves.push_back(2 * L + kTohStep);
    }
    if (plan.has_insp && (e.st.tin < K || (rm_idle && !e.st.im_pending))) {
      rates.push_back(K / plan.t_insp);
      moves.push_back(2 * L + kTinStep);
    }
    if (plan.has_clean_path &&
        ((e.st.cln < 0 && e.st.rm == kRmClean) || e.st.cln >= 0)) {
      rates.push_back(K / plan.t_cln);
      moves.push_back(2 * L + kClnStep);
    }
    if (plan.has_oh && ((e.st.rpl < 0 && e.st.rm == kRmReplace) || e.st.rpl >= 0)) {
      rates.push_back(K / plan.t_rpl);
      moves.push_back(2 * L + kRplStep);
    }

    double total = pairwise_sum(rates.data(), rates.size());
    if (total <= 0) break;
    double t = e.now + rng.exponential(total);
    if (t >= horizon) break;
    double pick = rng.uniform() * total;
    size_t k = 0;
    for (; k + 1 < rates.size(); ++k) {
      if (pick < rates[k]) break;
      pick -= rates[k];
    }
    e.advance_to(t);

    int mv = moves[k];
    if (mv < L) {
      e.apply_degrade(mv);
    } else if (mv < 2 * L) {
      bool was = e.failed();
      e.set_level(mv - L, 0);
      e.note_fail_edge(was);
    } else {
      switch (mv - 2 * L) {
        case kTrpStep:
          if (e.st.trp < K) ++e.st.trp;
          else {
            e.st.trp = 0;
            e.apply_check_clean();
          }
          break;
        case kTohStep:
          if (e.st.toh < K) ++e.st.toh;
          else {
            e.st.toh = 0;
            e.apply_check_replace();
          }
          break;
        case kTinStep:
          if (e.st.tin < K) ++e.st.tin;
          else {
            e.st.tin = 0;
            e.apply_inspect();
          }
          break;
        case kClnStep:
          if (e.st.cln < 0) e.st.cln = 0;
          else if (e.st.cln + 1 < static_cast<int>(K)) ++e.st.cln;
          else e.apply_clean();
          break;
        case kRplStep:
          if (e.st.rpl < 0) e.st.rpl = 0;
          else if (e.st.rpl + 1 < static_cast<int>(K)) ++e.st.rpl;
          else e.apply_replace();
          break;
      }
    }
  }
  return e.finish();
}

// ---------------------------------------------------------- deterministic --

// True delays: degradation steps of exactly t_deg/levels (sped up by the
// dependency factor), calendar-scheduled checks deferred while the repair
// module is busy, and repairs of exactly t_clean/t_replace. Simultaneous
// events resolve by fixed priority: completions, then checks and inspections,
// then degradation steps in leaf order. The trajectory is deterministic, so
// a single run describes the model.
inline RunStats run_deterministic(const SimPlan& plan, double horizon) {
  SimEngine e(plan, horizon);
  e.reset();
  const double inf = kInf;
  const int L = static_cast<int>(plan.leaves.size());
  std::vector<double> remaining(plan.leaves.size());  // work left in current stage
  std::vector<double> return_at(plan.leaves.size(), inf);  // stand-in comeback deadline
  for (int i = 0; i < L; ++i) remaining[i] = plan.leaves[i].stage_time;
  double next_rep = plan.has_rep ? plan.t_rep : inf;
  double next_oh = plan.has_oh ? plan.t_oh : inf;
  double next_insp = plan.has_insp ? plan.t_insp : inf;
  double done_cln = inf, done_rpl = inf;

  // priority order, low wins ties
  enum : int { kPerformRpl, kPerformCln, kCheckRpl, kCheckCln, kInspect, kDegrade };

  while (true) {
    double best = inf;
    int what = -1, who = -1;
    auto offer = [&](double t, int pri, int idx) {
      if (t < best - 1e-12 || (t < best + 1e-12 && what > pri)) {
        best = t;
        what = pri;
        who = idx;
      }
    };
    offer(done_rpl, kPerformRpl, -1);
    offer(done_cln, kPerformCln, -1);
    const bool rm_idle = e.st.rm == kRmIdle;
    if (rm_idle) {
      offer(std::max(next_oh, e.now), kCheckRpl, -1);
      offer(std::max(next_rep, e.now), kCheckCln, -1);
      if (!e.st.im_pending) offer(std::max(next_insp, e.now), kInspect, -1);
    }
    for (int i = 0; i < L; ++i) {
      const SimPlan::Leaf& lf = plan.leaves[i];
      if (e.st.level[i] < lf.levels) {
        offer(e.now + remaining[i] / e.accel(i), kDegrade, i);
      } else if (lf.repair_rate > 0) {
        if (return_at[i] == inf) return_at[i] = e.now + 1.0 / lf.repair_rate;
        offer(return_at[i], kDegrade, i);
      }
    }
    if (what < 0 || best >= horizon) break;

    // deplete stage work at the pre-event speeds
    for (int i = 0; i < L; ++i)
      if (e.st.level[i] < plan.leaves[i].levels) remaining[i] -= (best - e.now) * e.accel(i);
    e.advance_to(best);

    switch (what) {
      case kPerformRpl:
        e.apply_replace();
        done_rpl = inf;
        for (int i = 0; i < L; ++i) remaining[i] = plan.leaves[i].stage_time;
        break;
      case kPerformCln:
        e.apply_clean();
        done_cln = inf;
        for (int i = 0; i < L; ++i) remaining[i] = plan.leaves[i].stage_time;
        break;
      case kCheckRpl:
        next_oh += plan.t_oh;
        e.apply_check_replace();
        if (e.st.rm == kRmReplace) done_rpl = e.now + plan.t_rpl;
        break;
      case kCheckCln:
        next_rep += plan.t_rep;
        e.apply_check_clean();
        if (e.st.rm == kRmClean) done_cln = e.now + plan.t_cln;
        break;
      case kInspect:
        next_insp += plan.t_insp;
        e.apply_inspect();
        if (e.st.rm == kRmClean) done_cln = e.now + plan.t_cln;
        break;
      case kDegrade: {
        const SimPlan::Leaf& lf = plan.leaves[who];
        if (e.st.level[who] >= lf.levels) {
          bool was = e.failed();
          e.set_level(who, 0);
          e.note_fail_edge(was);
          return_at[who] = inf;
        } else {
          e.apply_degrade(who);
        }
        remaining[who] = lf.stage_time;
        break;
      }
    }
  }
  return e.finish();
}

inline Estimate summarize(std::vector<double>& vals, double z) {
  Estimate est;
  size_t n = vals.size();
  est.mean = pairwise_sum(vals.data(), n) / static_cast<double>(n);
  if (n > 1) {
    for (double& v : vals) v = (v - est.mean) * (v - est.mean);
    double ss = pairwise_sum(vals.data(), n);
    est.stddev = std::sqrt(ss / static_cast<double>(n - 1));
    est.half_width = z * est.stddev / std::sqrt(static_cast<double>(n));
  }
  return est;
}

inline unsigned sim_threads() {
  if (const char* env = std::getenv("FMTREE_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1 && v <= 256) return static_cast<unsigned>(v);
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc ? hc : 1;
}

}  // namespace detail

inline SimResult simulate(const FmtModel& m, const SimConfig& cfg) {
  if (cfg.runs < 1) throw std::invalid_argument("simulate: runs must be at least 1");
  if (!(cfg.horizon > 0)) throw std::invalid_argument("simulate: horizon must be positive");
  if (!(cfg.confidence > 0 && cfg.confidence < 1))
    throw std::invalid_argument("simulate: confidence must lie in (0,1)");
  auto t0 = std::chrono::steady_clock::now();
  detail::SimPlan plan = detail::sim_plan(m, m.costs);

  // without random delays every trajectory is identical: one run tells all
  const uint64_t runs = cfg.erlang_mode ? cfg.runs : 1;
  std::vector<detail::RunStats> stats(runs);
  auto worker = [&](uint64_t lo, uint64_t hi) {
    for (uint64_t r = lo; r < hi; ++r) {
      if (cfg.erlang_mode) {
        detail::Rng rng(cfg.seed, r);
        stats[r] = detail::run_erlang(plan, cfg.horizon, rng);
      } else {
        stats[r] = detail::run_deterministic(plan, cfg.horizon);
      }
    }
  };
  unsigned nt = std::min<uint64_t>(detail::sim_threads(), runs);
  if (nt <= 1) {
    worker(0, runs);
  } else {
    std::vector<std::thread> pool;
    uint64_t chunk = (runs + nt - 1) / nt;
    for (unsigned t = 0; t < nt; ++t)
      pool.emplace_back(worker, t * chunk, std::min<uint64_t>(runs, (t + 1) * chunk));
    for (std::thread& th : pool) th.join();
  }

  double z = detail::inv_normal(0.5 + cfg.confidence / 2.0);
  std::vector<double> col(runs);
  SimResult out;
  auto fill = [&](double detail::RunStats::* f, bool complement) {
    for (uint64_t r = 0; r < runs; ++r) col[r] = complement ? 1.0 - stats[r].*f : stats[r].*f;
    return detail::summarize(col, z);
  };
  out.reliability = fill(&detail::RunStats::unreliable, true);
  out.availability = fill(&detail::RunStats::downtime, true);
  out.expected_cost = fill(&detail::RunStats::cost, false);
  out.expected_failures = fill(&detail::RunStats::failures, false);
  out.runs = runs;
  out.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace fmtree
