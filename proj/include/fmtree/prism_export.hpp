#pragma once
// Renders the composed model in the PRISM language, one module per element
// automaton, synchronised through shared action labels exactly as the native
// engine composes them. Cross-validation plumbing: the output is meant to be
// fed to an external checker by hand, so it favours portable constructs.

#include <cctype>
#include <cstdio>
#include <sstream>
#include <string>

#include "fmtree/simulation.hpp"

namespace fmtree {

namespace detail {

inline std::string prism_ident(const std::string& raw) {
  std::string out;
  for (char ch : raw)
    out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_') ? ch : '_';
  if (out.empty() || std::isdigit(static_cast<unsigned char>(out[0]))) out.insert(0, 1, 'v');
  return out;
}

inline std::string prism_num(double x) {
  if (x == static_cast<int64_t>(x) && std::abs(x) < 1e15) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(x));
    return buf;
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace detail

// The model text plus a companion property list (named CSL queries over an
// undefined horizon constant, to be bound with -const horizon=<days>).
struct PrismExport {
  std::string model;
  std::string properties;
};

inline PrismExport to_prism(const FmtModel& m) {
  using detail::prism_ident;
  using detail::prism_num;
  detail::SimPlan plan = detail::sim_plan(m, m.costs);
  const uint32_t K = plan.stages;
  const std::string kk = std::to_string(K);
  std::ostringstream os;

  os << "ctmc\n\n";
  os << "// generated from a fault maintenance tree; rates are per day\n";
  os << "// timers run from t=0; each clock is an Erlang-" << K
     << " chain whose wrap-around step carries the check event\n\n";

  // guard signals over the leaf level variables
  std::string trig, thresh, failed;
  for (const auto& lf : plan.leaves) {
    const std::string v = prism_ident(lf.id);
    const std::string lv = std::to_string(lf.levels);
    if (!lf.exempt) {
      trig += (trig.empty() ? "" : " | ") + v + ">0";
      if (lf.levels > 1)
        thresh += (thresh.empty() ? "" : " | ") + ("(" + v + ">0 & " + v + "<" + lv + ")");
    }
    if (lf.in_cone) failed += (failed.empty() ? "" : " | ") + v + "=" + lv;
  }
  if (thresh.empty()) thresh = "false";
  if (trig.empty()) trig = "false";
  if (failed.empty()) failed = "false";
  os << "formula trig = " << trig << ";\n";
  os << "formula thresh = " << thresh << ";\n";
  os << "formula top_failed = " << failed << ";\n";
  os << "label \"top_failed\" = top_failed;\n\n";

  for (const auto& lf : plan.leaves) {
    if (lf.accel.empty()) continue;
    os << "formula acc_" << prism_ident(lf.id) << " = 1";
    for (const auto& [trg, gamma] : lf.accel) {
      const auto& t = plan.leaves[trg];
      os << " * (" << prism_ident(t.id) << "=" << t.levels << " ? " << prism_num(gamma)
         << " : 1)";
    }
    os << ";\n";
  }
  os << "\n";

  for (const auto& lf : plan.leaves) {
    const std::string v = prism_ident(lf.id);
    const std::string lv = std::to_string(lf.levels);
    os << "module m_" << v << "\n";
    os << "  " << v << " : [0.." << lv << "] init 0;\n";
    for (uint32_t i = 0; i < lf.levels; ++i) {
      os << "  [degrade_" << (i + 1) << "_" << v << "] " << v << "=" << i << " -> (1/"
         << prism_num(lf.stage_time) << ")";
      if (!lf.accel.empty()) os << "*acc_" << v;
      os << " : (" << v << "'=" << (i + 1) << ");\n";
    }
    if (lf.maintained) {
      if (plan.has_clean_path) {
        os << "  [perform_clean] " << v << ">0 -> 1 : (" << v << "'=" << v << "-1);\n";
        os << "  [perform_clean] " << v << "=0 -> 1 : true;\n";
      }
      if (plan.has_oh) os << "  [perform_replace] true -> 1 : (" << v << "'=0);\n";
    }
    if (lf.repair_rate > 0)
      os << "  [] " << v << "=" << lv << " -> " << prism_num(lf.repair_rate) << " : (" << v
         << "'=0);\n";
    os << "endmodule\n\n";
  }

  const bool has_rm = plan.has_rep || plan.has_oh || plan.has_insp;
  if (has_rm) {
    os << "// 0 idle, 1 pending clean, 2 pending replace\n";
    os << "module repair_unit\n  rm : [0..2] init 0;\n";
    if (plan.has_rep) {
      os << "  [check_clean] rm=0 & trig -> 1 : (rm'=1);\n";
      os << "  [check_clean] rm=0 & !trig -> 1 : true;\n";
    }
    if (plan.has_oh) {
      os << "  [check_replace] rm=0 & trig -> 1 : (rm'=2);\n";
      os << "  [check_replace] rm=0 & !trig -> 1 : true;\n";
    }
    if (plan.has_insp) {
      os << "  [inspect] rm=0 & thresh -> 1 : (rm'=1);\n";
      os << "  [inspect] rm=0 & !thresh -> 1 : true;\n";
    }
    if (plan.has_clean_path) {
      os << "  [trigger_clean] rm=1 -> 1 : true;\n";
      os << "  [perform_clean] rm=1 -> 1 : (rm'=0);\n";
    }
    if (plan.has_oh) {
      os << "  [trigger_replace] rm=2 -> 1 : true;\n";
      os << "  [perform_replace] rm=2 -> 1 : (rm'=0);\n";
    }
    os << "endmodule\n\n";
  }
  if (plan.has_insp) {
    os << "module inspection_unit\n  im : [0..1] init 0;\n";
    os << "  [inspect] im=0 & thresh -> 1 : (im'=1);\n";
    os << "  [inspect] im=0 & !thresh -> 1 : true;\n";
    os << "  [perform_clean] true -> 1 : (im'=0);\n";
    if (plan.has_oh) os << "  [perform_replace] true -> 1 : (im'=0);\n";
    os << "endmodule\n\n";
  }

  auto timer = [&](const char* name, double period, const char* event) {
    os << "module timer_" << name << "\n  " << name << " : [0.." << kk << "] init 0;\n";
    if (K > 0)
      os << "  [] " << name << "<" << kk << " -> " << kk << "/" << prism_num(period) << " : ("
         << name << "'=" << name << "+1);\n";
    os << "  [" << event << "] " << name << "=" << kk << " -> " << kk << "/"
       << prism_num(period) << " : (" << name << "'=0);\n";
    os << "endmodule\n\n";
  };
  auto duration = [&](const char* name, double span, const char* start, const char* done) {
    // idle at the top index, one start step, then the staged work
    os << "module duration_" << name << "\n  " << name << " : [0.." << kk << "] init " << kk
       << ";\n";
    os << "  [" << start << "] " << name << "=" << kk << " -> " << kk << "/" << prism_num(span)
       << " : (" << name << "'=0);\n";
    if (K > 1)
      os << "  [] " << name << "<" << (K - 1) << " -> " << kk << "/" << prism_num(span) << " : ("
         << name << "'=" << name << "+1);\n";
    os << "  [" << done << "] " << name << "=" << (K - 1) << " -> " << kk << "/"
       << prism_num(span) << " : (" << name << "'=" << kk << ");\n";
    os << "endmodule\n\n";
  };
  if (plan.has_clean_path) duration("cln", plan.t_cln, "trigger_clean", "perform_clean");
  if (plan.has_oh) duration("rpl", plan.t_rpl, "trigger_replace", "perform_replace");
  if (plan.has_rep) timer("trp", plan.t_rep, "check_clean");
  if (plan.has_oh) timer("toh", plan.t_oh, "check_replace");
  if (plan.has_insp) timer("tin", plan.t_insp, "inspect");

  os << "rewards \"uptime\"\n  !top_failed : 1;\nendrewards\n\n";
  os << "rewards \"cost\"\n";
  os << "  true : " << prism_num(plan.costs.operational_per_day) << ";\n";
  os << "  top_failed : " << prism_num(plan.costs.failure_per_day) << ";\n";
  if (plan.has_clean_path) os << "  [perform_clean] true : " << prism_num(plan.costs.repair) << ";\n";
  if (plan.has_oh) os << "  [perform_replace] true : " << prism_num(plan.costs.replace) << ";\n";
  os << "endrewards\n\n";
  os << "rewards \"failures\"\n";
  for (const auto& lf : plan.leaves)
    if (lf.in_cone)
      os << "  [degrade_" << lf.levels << "_" << prism_ident(lf.id) << "] !top_failed : 1;\n";
  os << "endrewards\n";

  PrismExport out;
  out.model = os.str();
  out.properties =
      "const double horizon;\n"
      "// reliability = 1 - unreliability; availability = uptime / horizon\n"
      "\"unreliability\": P=? [ F<=horizon \"top_failed\" ];\n"
      "\"uptime\": R{\"uptime\"}=? [ C<=horizon ];\n"
      "\"expected_cost\": R{\"cost\"}=? [ C<=horizon ];\n"
      "\"expected_failures\": R{\"failures\"}=? [ C<=horizon ];\n";
  return out;
}

}  // namespace fmtree
