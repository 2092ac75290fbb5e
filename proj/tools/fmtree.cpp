// command line front end over the header-only library
#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "fmtree/analysis.hpp"
#include "fmtree/decomposition.hpp"
#include "fmtree/parser.hpp"
#include "fmtree/prism_export.hpp"
#include "fmtree/simulation.hpp"

using json = nlohmann::ordered_json;
using namespace fmtree;

namespace {

// exit codes: 0 ok, 1 runtime, 2 I/O, 3 parse/validation, 4 state budget
enum : int { kOk = 0, kRuntime = 1, kIo = 2, kInvalid = 3, kBudget = 4 };

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw io_error("cannot read '" + path + "'");
  return ss.str();
}

FmtModel load_model(const std::string& path) { return parse(slurp(path)); }

double unit_factor(char u) {
  switch (u) {
    case 'd': return 1.0;
    case 'm': return kDaysPerMonth;
    case 'y': return kDaysPerYear;
    default: throw std::invalid_argument(std::string("unknown unit suffix '") + u + "'");
  }
}

// one element of a horizon list: a plain value or a start:stop:step range,
// any part may carry a d/m/y suffix; unitless parts borrow the last suffix
// seen in the element (so 0:25:5y means years throughout)
void parse_horizon_item(const std::string& item, std::vector<double>& out) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : item) {
    if (c == ':') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  if (parts.size() != 1 && parts.size() != 3)
    throw std::invalid_argument("bad horizon '" + item + "': use <v> or <start>:<stop>:<step>");

  double fallback = 1.0;
  for (const std::string& p : parts)
    if (!p.empty() && std::isalpha(static_cast<unsigned char>(p.back())))
      fallback = unit_factor(p.back());

  std::vector<double> v;
  for (std::string p : parts) {
    double f = fallback;
    if (!p.empty() && std::isalpha(static_cast<unsigned char>(p.back()))) {
      f = unit_factor(p.back());
      p.pop_back();
    }
    size_t used = 0;
    double x;
    try {
      x = std::stod(p, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad horizon number '" + p + "'");
    }
    if (used != p.size()) throw std::invalid_argument("bad horizon number '" + p + "'");
    if (x < 0) throw std::invalid_argument("horizons must be nonnegative");
    v.push_back(x * f);
  }
  if (v.size() == 1) {
    out.push_back(v[0]);
    return;
  }
  if (v[2] <= 0) throw std::invalid_argument("horizon step must be positive");
  if (v[1] < v[0]) throw std::invalid_argument("horizon range runs backwards");
  for (double x = v[0]; x <= v[1] + 1e-9 * v[2]; x += v[2]) out.push_back(x);
}

std::vector<double> parse_horizons(const std::string& spec) {
  std::vector<double> out;
  std::string item;
  std::stringstream ss(spec);
  while (std::getline(ss, item, ','))
    if (!item.empty()) parse_horizon_item(item, out);
  if (out.empty()) throw std::invalid_argument("no horizons given");
  return out;
}

std::vector<Metric> parse_metrics(const std::string& spec) {
  std::vector<Metric> out;
  std::string item;
  std::stringstream ss(spec);
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "all") {
      out = {Metric::kReliability, Metric::kAvailability, Metric::kExpectedCost,
             Metric::kExpectedFailures};
      return out;
    }
    out.push_back(metric_from_name(item));
  }
  if (out.empty()) throw std::invalid_argument("no metrics given");
  return out;
}

void apply_cost_overrides(CostModel& c, const std::string& spec) {
  std::string item;
  std::stringstream ss(spec);
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    size_t eq = item.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("bad cost override '" + item + "': use key=value");
    std::string key = item.substr(0, eq);
    double val = std::stod(item.substr(eq + 1));
    if (val < 0) throw std::invalid_argument("costs must be nonnegative");
    if (key == "repair") c.repair = val;
    else if (key == "replace") c.replace = val;
    else if (key == "opday") c.operational_per_day = val;
    else if (key == "failday") c.failure_per_day = val;
    else throw std::invalid_argument("unknown cost key '" + key + "'");
  }
}

// maintenance strategies: [name] sections with trep/toh/tinsp/stages keys,
// values take d/m/y suffixes, inf or off disables a timer
struct Strategy {
  std::string name;
  MaintenancePolicy policy;
};

std::vector<Strategy> parse_strategies(const std::string& text, const MaintenancePolicy& base) {
  std::vector<Strategy> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw std::invalid_argument("strategies line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    size_t b = line.find_last_not_of(" \t\r");
    line = line.substr(a, b - a + 1);
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) fail("malformed section header");
      out.push_back({line.substr(1, line.size() - 2), base});
      continue;
    }
    if (out.empty()) fail("key before any [strategy] section");
    size_t eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    std::string key = line.substr(0, line.find_first_of(" \t="));
    std::string val = line.substr(eq + 1);
    val.erase(0, val.find_first_not_of(" \t"));
    val.erase(val.find_last_not_of(" \t") + 1);
    if (val.empty()) fail("empty value");

    if (key == "stages") {
      long s = std::strtol(val.c_str(), nullptr, 10);
      if (s < 1) fail("stages must be a positive integer");
      out.back().policy.timer_stages = static_cast<uint32_t>(s);
      continue;
    }
    double days;
    if (val == "inf" || val == "off") {
      days = kInf;
    } else {
      double f = 1.0;
      if (std::isalpha(static_cast<unsigned char>(val.back()))) {
        f = unit_factor(val.back());
        val.pop_back();
      }
      try {
        size_t used = 0;
        days = std::stod(val, &used) * f;
        if (used != val.size()) fail("malformed number '" + val + "'");
      } catch (const std::invalid_argument&) {
        throw;
      } catch (const std::exception&) {
        fail("malformed number '" + val + "'");
      }
      if (days <= 0) fail("periods must be positive");
    }
    if (key == "trep") out.back().policy.t_rep = days;
    else if (key == "toh") out.back().policy.t_oh = days;
    else if (key == "tinsp") out.back().policy.t_insp = days;
    else fail("unknown key '" + key + "'");
  }
  if (out.empty()) throw std::invalid_argument("strategies file defines no strategies");
  return out;
}

struct Row {
  std::string strategy;  // empty outside sweep
  Metric metric;
  double horizon = 0;
  double value = 0;
  uint64_t states = 0;
  double time_ms = 0;
};

void write_rows(std::ostream& os, const std::string& model, const std::vector<Row>& rows,
                const std::string& format, bool sweep, const std::vector<std::string>& pareto) {
  if (format == "csv") {
    os << "model," << (sweep ? "strategy," : "") << "metric,horizon_days,value,states,time_ms\n";
    for (const Row& r : rows) {
      os << model << ',';
      if (sweep) os << r.strategy << ',';
      char ms[32];
      std::snprintf(ms, sizeof ms, "%.3f", r.time_ms);
      os << metric_name(r.metric) << ',' << fmt_double(r.horizon) << ',' << fmt_double(r.value)
         << ',' << r.states << ',' << ms << '\n';
    }
    if (sweep && !pareto.empty()) {
      os << "# cost/failures frontier at the last horizon:";
      for (const std::string& s : pareto) os << ' ' << s;
      os << '\n';
    }
    return;
  }
  json doc;
  doc["model"] = model;
  json arr = json::array();
  for (const Row& r : rows) {
    json e;
    if (sweep) e["strategy"] = r.strategy;
    e["metric"] = metric_name(r.metric);
    e["horizon_days"] = r.horizon;
    e["value"] = r.value;
    e["states"] = r.states;
    e["time_ms"] = r.time_ms;
    arr.push_back(std::move(e));
  }
  doc["results"] = std::move(arr);
  if (sweep && !pareto.empty()) doc["cost_failures_frontier"] = pareto;
  os << doc.dump(2) << '\n';
}

unsigned default_threads() {
  if (const char* env = std::getenv("FMTREE_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

// runs every metric/horizon pair through either the monolithic chain or the
// decomposition pipeline; pairs are independent, so extra workers just split
// the row list (output order stays fixed)
std::vector<Row> analyze_rows(const FmtModel& m, const std::vector<Metric>& metrics,
                              const std::vector<double>& horizons, bool decompose,
                              const AbstractOptions& ao, unsigned workers) {
  const CompiledModel* cm = nullptr;
  CompiledModel mono;
  if (!decompose) {
    mono = compile(m, m.costs, ao.compile);
    cm = &mono;
  }
  std::vector<Row> rows(metrics.size() * horizons.size());
  auto fill = [&](size_t i) {
    Metric metric = metrics[i / horizons.size()];
    double h = horizons[i % horizons.size()];
    if (decompose) {
      AbstractResult ar = abstract_analyze(m, metric, h, ao);
      rows[i] = {"", metric, h, ar.value, ar.total_states, ar.wall_ms};
    } else {
      MetricResult r = compute_metric(*cm, metric, h, ao.transient);
      rows[i] = {"", metric, h, r.value, r.states, r.wall_ms};
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, rows.size()));
  if (workers == 1) {
    for (size_t i = 0; i < rows.size(); ++i) fill(i);
    return rows;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (size_t i = next++; i < rows.size(); i = next++) {
        try {
          fill(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!first_error) first_error = std::current_exception();
          next = rows.size();
        }
      }
    });
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return rows;
}

std::ostream& open_output(std::ofstream& file, const std::string& path) {
  if (path.empty()) return std::cout;
  file.open(path, std::ios::binary);
  if (!file) throw io_error("cannot write '" + path + "'");
  return file;
}

int cmd_check(const std::string& path) {
  FmtModel m = load_model(path);
  std::vector<Violation> vs = validate(m);
  for (const Violation& v : vs)
    std::cout << (v.warning ? "warning" : "error") << ": " << v.node << ": " << v.message
              << '\n';
  if (is_valid(vs)) {
    std::cout << "ok: " << path << '\n';
    return kOk;
  }
  return kInvalid;
}

json estimate_json(const Estimate& e) {
  return json{{"mean", e.mean}, {"stddev", e.stddev}, {"half_width", e.half_width}};
}

int run(int argc, char** argv) {
  CLI::App app{"fault maintenance tree analysis"};
  app.require_subcommand(1);

  std::string path, out_path, format = "csv", horizons_spec = "1y";
  std::string analyze_metrics = "reliability", sweep_metrics = "expected_cost,expected_failures";
  std::string compare_metric = "reliability";
  std::string costs_spec, strategies_path, props_path;
  bool decompose = false, erlang = false, compare = false;
  uint64_t budget = CompileOptions{}.max_states;
  double tolerance = TransientOptions{}.tolerance;
  uint64_t runs = 10000, seed = 0;
  double sim_horizon = kDaysPerYear, confidence = 0.99;
  unsigned threads = 0;

  auto add_common = [&](CLI::App* c) {
    c->add_option("model", path, "model file")->required();
    c->add_option("-o,--output", out_path, "write output here instead of stdout");
  };
  auto add_engine = [&](CLI::App* c) {
    c->add_option("--budget", budget, "monolithic state budget");
    c->add_option("--tolerance", tolerance, "transient truncation tolerance");
    c->add_flag("--decompose", decompose, "abstract sub-trees instead of one flat chain");
    c->add_option("--costs", costs_spec, "override costs, e.g. repair=80,opday=1");
    c->add_option("--format", format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
  };

  CLI::App* check = app.add_subcommand("check", "parse and validate a model");
  check->add_option("model", path, "model file")->required();

  CLI::App* analyze = app.add_subcommand("analyze", "compute dependability metrics");
  add_common(analyze);
  add_engine(analyze);
  analyze->add_option("--metric", analyze_metrics, "comma list or all");
  analyze->add_option("--horizons", horizons_spec, "e.g. 0:25:5y or 7d,182d,1y");
  analyze->add_option("--threads", threads, "workers for metric/horizon rows (default FMTREE_THREADS)");

  CLI::App* compare_cmd =
      app.add_subcommand("compare", "monolithic vs modular pipeline, side by side");
  add_common(compare_cmd);
  compare_cmd->add_option("--metric", compare_metric, "single metric name");
  compare_cmd->add_option("--horizons", horizons_spec, "e.g. 5y,10y,15y");
  compare_cmd->add_option("--budget", budget, "monolithic state budget");
  compare_cmd->add_option("--tolerance", tolerance, "transient truncation tolerance");
  compare_cmd->add_option("--costs", costs_spec, "override costs, e.g. repair=80,opday=1");
  compare_cmd->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  CLI::App* sweep = app.add_subcommand("sweep", "compare maintenance strategies");
  add_common(sweep);
  add_engine(sweep);
  sweep->add_option("--strategies", strategies_path, "strategy file")->required();
  sweep->add_option("--metric", sweep_metrics, "comma list or all");
  sweep->add_option("--horizons", horizons_spec, "e.g. 0:25:5y");
  sweep->add_option("--threads", threads, "workers for metric/horizon rows (default FMTREE_THREADS)");

  CLI::App* simulate_cmd = app.add_subcommand("simulate", "Monte Carlo estimates");
  add_common(simulate_cmd);
  simulate_cmd->add_option("--horizon", sim_horizon, "horizon in days");
  simulate_cmd->add_option("--runs", runs, "number of runs");
  simulate_cmd->add_option("--seed", seed, "random seed");
  simulate_cmd->add_option("--confidence", confidence, "confidence level");
  simulate_cmd->add_flag("--erlang", erlang, "sample the chain's law instead of true delays");
  simulate_cmd->add_flag("--compare", compare, "also run the numeric engine and report gaps");
  simulate_cmd->add_flag("--decompose", decompose, "numeric side of --compare uses abstraction");
  simulate_cmd->add_option("--budget", budget, "state budget for --compare");
  simulate_cmd->add_option("--threads", threads, "worker threads (default FMTREE_THREADS)");

  CLI::App* export_cmd = app.add_subcommand("export-prism", "emit the composed model");
  add_common(export_cmd);
  export_cmd->add_option("--props", props_path, "also write the property list here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  if (check->parsed()) return cmd_check(path);

  if (threads > 0) setenv("FMTREE_THREADS", std::to_string(threads).c_str(), 1);

  FmtModel m = load_model(path);
  if (!costs_spec.empty()) apply_cost_overrides(m.costs, costs_spec);
  AbstractOptions ao;
  ao.compile.max_states = budget;
  ao.transient.tolerance = tolerance;

  const unsigned workers = threads > 0 ? threads : default_threads();

  if (analyze->parsed()) {
    std::vector<Row> rows = analyze_rows(m, parse_metrics(analyze_metrics),
                                         parse_horizons(horizons_spec), decompose, ao, workers);
    std::ofstream file;
    write_rows(open_output(file, out_path), path, rows, format, false, {});
    return kOk;
  }

  if (compare_cmd->parsed()) {
    Metric metric = metric_from_name(compare_metric);
    std::vector<CompareRow> cmp = fmtree::compare(m, metric, parse_horizons(horizons_spec), ao);
    std::ofstream file;
    std::ostream& os = open_output(file, out_path);
    if (format == "csv") {
      os << "model,metric,horizon_days,original_ms,original_value,mttf_ms,abstract_ms,"
            "abstract_value,original_states,abstract_states\n";
      for (const CompareRow& r : cmp) {
        char times[64];
        std::snprintf(times, sizeof times, "%.3f,", r.original_ms);
        os << path << ',' << metric_name(metric) << ',' << fmt_double(r.horizon) << ',' << times
           << fmt_double(r.original_value) << ',';
        std::snprintf(times, sizeof times, "%.3f,%.3f,", r.mttf_ms, r.abstract_ms);
        os << times << fmt_double(r.abstract_value) << ',' << r.original_states << ','
           << r.abstract_states << '\n';
      }
    } else {
      json doc;
      doc["model"] = path;
      doc["metric"] = metric_name(metric);
      json arr = json::array();
      for (const CompareRow& r : cmp)
        arr.push_back({{"horizon_days", r.horizon},
                       {"original_ms", r.original_ms},
                       {"original_value", r.original_value},
                       {"mttf_ms", r.mttf_ms},
                       {"abstract_ms", r.abstract_ms},
                       {"abstract_value", r.abstract_value},
                       {"original_states", r.original_states},
                       {"abstract_states", r.abstract_states}});
      doc["rows"] = std::move(arr);
      os << doc.dump(2) << '\n';
    }
    return kOk;
  }

  if (sweep->parsed()) {
    std::vector<Strategy> strategies =
        parse_strategies(slurp(strategies_path), m.policy);
    std::vector<Metric> metrics = parse_metrics(sweep_metrics);
    std::vector<double> horizons = parse_horizons(horizons_spec);
    std::vector<Row> rows;
    for (const Strategy& s : strategies) {
      FmtModel variant = m;
      variant.policy = s.policy;
      for (Row r : analyze_rows(variant, metrics, horizons, decompose, ao, workers)) {
        r.strategy = s.name;
        rows.push_back(std::move(r));
      }
    }
    // non-dominated strategies in the cost/failures plane at the last horizon
    std::vector<std::string> pareto;
    const double last = horizons.back();
    std::vector<std::pair<double, double>> pts(strategies.size(),
                                               {std::nan(""), std::nan("")});
    for (const Row& r : rows) {
      if (r.horizon != last) continue;
      for (size_t i = 0; i < strategies.size(); ++i)
        if (strategies[i].name == r.strategy) {
          if (r.metric == Metric::kExpectedCost) pts[i].first = r.value;
          if (r.metric == Metric::kExpectedFailures) pts[i].second = r.value;
        }
    }
    for (size_t i = 0; i < strategies.size(); ++i) {
      if (std::isnan(pts[i].first) || std::isnan(pts[i].second)) continue;
      bool dominated = false;
      for (size_t j = 0; j < strategies.size() && !dominated; ++j)
        if (j != i && !std::isnan(pts[j].first) && !std::isnan(pts[j].second))
          dominated = pts[j].first <= pts[i].first && pts[j].second <= pts[i].second &&
                      (pts[j].first < pts[i].first || pts[j].second < pts[i].second);
      if (!dominated) pareto.push_back(strategies[i].name);
    }
    std::ofstream file;
    write_rows(open_output(file, out_path), path, rows, format, true, pareto);
    return kOk;
  }

  if (simulate_cmd->parsed()) {
    SimConfig cfg;
    cfg.runs = runs;
    cfg.horizon = sim_horizon;
    cfg.seed = seed;
    cfg.confidence = confidence;
    cfg.erlang_mode = erlang;
    SimResult r = simulate(m, cfg);

    json doc;
    doc["model"] = path;
    doc["horizon_days"] = cfg.horizon;
    doc["runs"] = r.runs;
    doc["seed"] = cfg.seed;
    doc["erlang_mode"] = cfg.erlang_mode;
    doc["confidence"] = cfg.confidence;
    doc["estimates"] = {{"reliability", estimate_json(r.reliability)},
                        {"availability", estimate_json(r.availability)},
                        {"expected_cost", estimate_json(r.expected_cost)},
                        {"expected_failures", estimate_json(r.expected_failures)}};
    if (compare) {
      auto numeric = [&](Metric metric) {
        if (decompose) return abstract_analyze(m, metric, cfg.horizon, ao).value;
        CompiledModel cm = compile(m, m.costs, ao.compile);
        return compute_metric(cm, metric, cfg.horizon, ao.transient).value;
      };
      json cmp;
      const std::pair<const char*, const Estimate*> items[] = {
          {"reliability", &r.reliability},
          {"availability", &r.availability},
          {"expected_cost", &r.expected_cost},
          {"expected_failures", &r.expected_failures}};
      for (auto [name, est] : items) {
        double v = numeric(metric_from_name(name));
        double gap = std::abs(est->mean - v);
        cmp[name] = {{"numeric", v}, {"gap", gap}, {"within_ci", gap <= est->half_width}};
      }
      doc["comparison"] = std::move(cmp);
    }
    doc["wall_ms"] = r.wall_ms;
    std::ofstream file;
    open_output(file, out_path) << doc.dump(2) << '\n';
    return kOk;
  }

  if (export_cmd->parsed()) {
    PrismExport px = to_prism(m);
    std::ofstream file;
    std::ostream& os = open_output(file, out_path);
    os << px.model;
    os << "\n// property list (also available via --props):\n";
    std::istringstream props(px.properties);
    for (std::string line; std::getline(props, line);) os << "// " << line << '\n';
    if (!props_path.empty()) {
      std::ofstream pf(props_path, std::ios::binary);
      if (!pf) throw io_error("cannot write '" + props_path + "'");
      pf << px.properties;
    }
    return kOk;
  }
  return kRuntime;  // unreachable: a subcommand is required
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const io_error& e) {
    std::cerr << "fmtree: " << e.what() << '\n';
    return kIo;
  } catch (const budget_error& e) {
    std::cerr << "fmtree: " << e.what() << '\n';
    return kBudget;
  } catch (const parse_error& e) {
    std::cerr << "fmtree: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::invalid_argument& e) {
    std::cerr << "fmtree: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "fmtree: " << e.what() << '\n';
    return kRuntime;
  }
}
