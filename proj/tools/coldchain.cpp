// Command line front end: fit-power, build-lattice, train, evaluate, sweep,
// run-experiment, report. Exit codes: 0 ok, 2 config error, 3 numerical
// failure. All CSV/JSON/SVG outputs are deterministic for fixed seeds.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "coldchain/csv.hpp"
#include "coldchain/instance.hpp"
#include "coldchain/policies.hpp"
#include "coldchain/power.hpp"
#include "coldchain/scenario.hpp"
#include "coldchain/sddp.hpp"
#include "coldchain/stage_lp.hpp"
#include "coldchain/svg.hpp"
#include "coldchain/toml.hpp"

namespace fs = std::filesystem;
using namespace coldchain;

namespace {

int fail(int code, const std::string& what) {
  std::cerr << "coldchain: error: " << what << "\n";
  return code;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("short write to " + path);
}

std::string g6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

int worker_count(int n_jobs) {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* s = std::getenv("COLDCHAIN_THREADS")) {
    int v = std::atoi(s);
    if (v >= 1) n = v;
  }
  return std::max(1, std::min(n, n_jobs));
}

PowerModels fit_power(const RouteInstance& inst, int planes, std::uint64_t seed) {
  FitOptions fopt;
  fopt.n_planes = planes;
  fopt.seed = seed;
  return build_power_models(inst, default_r134a_table(), FitGrid{}, fopt);
}

PowerModels load_or_fit_power(const RouteInstance& inst, const std::string& path, int planes,
                              std::uint64_t seed) {
  if (!path.empty()) return load_power_models(path);
  return fit_power(inst, planes, seed);
}

void print_summaries(const std::vector<PolicyResult>& results) {
  std::printf("%-6s %6s %18s %14s %12s %12s %11s\n", "policy", "n", "mean_cost_K_min",
              "se_K_min", "mean_fuel_L", "on_fraction", "violations");
  for (const auto& r : results) {
    PolicySummary s = summarize(r);
    std::printf("%-6s %6d %18.6f %14.6f %12.4f %12.4f %11d\n", s.policy.c_str(), s.n,
                s.mean_cost_K_min, s.se_cost_K_min, s.mean_fuel_L, s.mean_on_fraction,
                s.violation_scenarios);
  }
}

// ---------------------------------------------------------------------------
// fit-power

struct FitPowerArgs {
  std::string instance;
  std::string out = ".";
  int planes = 4;
  std::uint64_t seed = 20240901;
};

int cmd_fit_power(const FitPowerArgs& a) {
  RouteInstance inst;
  try {
    inst = load_instance(a.instance);
    fs::create_directories(a.out);
  } catch (const std::exception& e) {
    return fail(2, e.what());
  }
  try {
    PowerModels pm = fit_power(inst, a.planes, a.seed);
    write_text((fs::path(a.out) / "power_models.json").string(), power_models_to_json(pm));
    csv::Writer w({"ambient_bucket_K", "planes", "wmape_frac", "max_rel_err_frac"});
    for (const auto& [bucket, m] : pm.by_bucket)
      w.add_row({csv::Writer::cell(bucket), csv::Writer::cell(m.n_planes()),
                 csv::Writer::cell(m.wmape), csv::Writer::cell(m.max_rel_err)});
    w.write_file((fs::path(a.out) / "power_fit.csv").string());
    double worst = 0;
    for (const auto& [bucket, m] : pm.by_bucket) worst = std::max(worst, m.wmape);
    std::printf("fit %zu ambient buckets, %d planes each, worst wMAPE %.4f%%\n",
                pm.by_bucket.size(), a.planes, 100.0 * worst);
    std::printf("wrote %s and %s\n", (fs::path(a.out) / "power_models.json").c_str(),
                (fs::path(a.out) / "power_fit.csv").c_str());
  } catch (const std::invalid_argument& e) {
    return fail(2, e.what());
  } catch (const std::exception& e) {
    return fail(3, e.what());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// build-lattice

struct BuildLatticeArgs {
  std::string instance;
  std::string door_model;
  std::string out = "lattice.json";
  std::string sse_trace;
  int nodes = 30;
  int samples = 1000;
  std::uint64_t seed = 1;
  bool fix_temps = false;
  bool fix_door_times = false;
};

int cmd_build_lattice(const BuildLatticeArgs& a) {
  RouteInstance inst;
  DoorTimeModel door;
  try {
    inst = load_instance(a.instance);
    door = load_door_time_model(a.door_model);
    if (auto parent = fs::path(a.out).parent_path(); !parent.empty())
      fs::create_directories(parent);
  } catch (const std::exception& e) {
    return fail(2, e.what());
  }
  try {
    ScenarioModel model(&inst, door);
    model.fix_temps = a.fix_temps;
    model.fix_door_times = a.fix_door_times;
    std::vector<std::vector<double>> trace;
    ScenarioLattice lat = build_lattice(model, a.nodes, a.samples, a.seed,
                                        a.sse_trace.empty() ? nullptr : &trace);
    write_text(a.out, lattice_to_json(lat));
    if (!a.sse_trace.empty()) {
      csv::Writer w({"stage", "iteration", "sse"});
      for (size_t s = 0; s < trace.size(); ++s)
        for (size_t it = 0; it < trace[s].size(); ++it)
          w.add_row({csv::Writer::cell(static_cast<int>(s + 2)),
                     csv::Writer::cell(static_cast<int>(it)), csv::Writer::cell(trace[s][it])});
      w.write_file(a.sse_trace);
    }
    std::printf("lattice: %d stages, %d nodes/stage from %d samples\n", lat.n_stages(), a.nodes,
                a.samples);
    for (int s = 1; s <= lat.n_stages(); ++s)
      std::printf("  stage %d: max door %.1f s, %d handling slots\n", s,
                  lat.max_door_open_s[static_cast<size_t>(s - 1)],
                  lat.handling_slots[static_cast<size_t>(s - 1)]);
    std::printf("wrote %s\n", a.out.c_str());
  } catch (const std::invalid_argument& e) {
    return fail(2, e.what());
  } catch (const std::exception& e) {
    return fail(3, e.what());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string instance;
  std::string lattice;
  std::string power;
  std::string out = ".";
  int iterations = 150;
  std::uint64_t seed = 1;
  double budget_liters = -1;  // < 0 disables the fuel state
  double mu_penalty = 10000;
};

int cmd_train(const TrainArgs& a) {
  RouteInstance inst;
  ScenarioLattice lat;
  try {
    inst = load_instance(a.instance);
    lat = load_lattice(a.lattice);
    fs::create_directories(a.out);
  } catch (const std::exception& e) {
    return fail(2, e.what());
  }
  try {
    PowerModels pm = load_or_fit_power(inst, a.power, 4, 20240901);
    TimeGrid grid(inst, lat.handling_slots);
    TrainOptions opt;
    opt.iterations = a.iterations;
    opt.seed = a.seed;
    if (a.budget_liters >= 0) {
      opt.with_fuel = true;
      opt.fuel_budget_L = a.budget_liters;
      opt.mu_penalty_per_L = a.mu_penalty;
    }
    TrainResult res = train(inst, grid, pm, lat, opt);
    write_text((fs::path(a.out) / "cuts.json").string(), value_function_to_json(res.value));
    write_text((fs::path(a.out) / "train_report.csv").string(),
               train_report_to_csv(res.report));
    std::printf("lower bound %.6f K*min after %d iterations (%.1f s)\n",
                res.report.lower_bound_K_min.back(), res.report.iterations_run,
                res.report.train_seconds);
    std::printf("wrote %s and %s\n", (fs::path(a.out) / "cuts.json").c_str(),
                (fs::path(a.out) / "train_report.csv").c_str());
  } catch (const std::invalid_argument& e) {
    return fail(2, e.what());
  } catch (const std::exception& e) {
    return fail(3, e.what());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::string instance;
  std::string lattice;
  std::string door_model;
  std::string cuts;
  std::string power;
  std::string out = ".";
  std::vector<std::string> policies{"h1", "h2", "rlp", "sp", "clv"};
  int n = 1000;
  std::uint64_t seed = 99;
  double lambda1 = 0.5;
  double lambda2 = 1.0;
  double fuel_budget = -1;
  double mu_penalty = 10000;
  double benders_gap = 1e-7;
  int benders_iters = 200;
  int clv_iters = 300;
  bool fix_temps = false;
  bool fix_door_times = false;
};

int cmd_evaluate(const EvaluateArgs& a) {
  RouteInstance inst;
  ScenarioLattice lat;
  DoorTimeModel door;
  ValueFunction vf;
  bool have_cuts = false;
  try {
    inst = load_instance(a.instance);
    lat = load_lattice(a.lattice);
    door = load_door_time_model(a.door_model);
    if (!a.cuts.empty()) {
      vf = load_value_function(a.cuts);
      have_cuts = true;
    }
    fs::create_directories(a.out);
  } catch (const std::exception& e) {
    return fail(2, e.what());
  }
  try {
    PowerModels pm = load_or_fit_power(inst, a.power, 4, 20240901);
    TimeGrid grid(inst, lat.handling_slots);
    ScenarioModel model(&inst, door);
    model.fix_temps = a.fix_temps;
    model.fix_door_times = a.fix_door_times;
    EvaluateOptions opt;
    opt.n_scenarios = a.n;
    opt.seed = a.seed;
    opt.heuristic.lambda1 = a.lambda1;
    opt.heuristic.lambda2 = a.lambda2;
    if (a.fuel_budget >= 0) {
      opt.with_fuel = true;
      opt.fuel_budget_L = a.fuel_budget;
      opt.mu_penalty_per_L = a.mu_penalty;
    }
    opt.benders_gap = a.benders_gap;
    opt.benders_max_iterations = a.benders_iters;
    opt.clv_max_iterations = a.clv_iters;
    auto results =
        evaluate(inst, grid, pm, model, a.policies, have_cuts ? &vf : nullptr, opt);
    write_text((fs::path(a.out) / "results.csv").string(), results_to_csv(results));
    write_text((fs::path(a.out) / "summary.csv").string(), summary_to_csv(results));
    print_summaries(results);
    std::printf("wrote %s and %s\n", (fs::path(a.out) / "results.csv").c_str(),
                (fs::path(a.out) / "summary.csv").c_str());
  } catch (const std::invalid_argument& e) {
    return fail(2, e.what());
  } catch (const std::exception& e) {
    return fail(3, e.what());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// sweep (second heuristic's pull-down factor)

struct SweepArgs {
  std::string instance;
  std::string lattice;
  std::string door_model;
  std::string out = ".";
  std::vector<double> values{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  int n = 1000;
  std::uint64_t seed = 99;
  double lambda1 = 0.5;
};

int cmd_sweep(const SweepArgs& a) {
  RouteInstance inst;
  ScenarioLattice lat;
  DoorTimeModel door;
  try {
    inst = load_instance(a.instance);
    lat = load_lattice(a.lattice);
    door = load_door_time_model(a.door_model);
    if (a.values.empty()) throw std::invalid_argument("sweep: empty value list");
    fs::create_directories(a.out);
  } catch (const std::exception& e) {
    return fail(2, e.what());
  }
  try {
    PowerModels pm = fit_power(inst, 4, 20240901);
    TimeGrid grid(inst, lat.handling_slots);
    ScenarioModel model(&inst, door);
    csv::Writer w({"lambda2", "n", "mean_cost_K_min", "se_cost_K_min", "mean_fuel_L",
                   "mean_on_fraction", "violation_scenarios"});
    std::vector<double> xs, ys;
    double best_v = a.values.front(), best_cost = 0;
    bool first = true;
    for (double v : a.values) {
      EvaluateOptions opt;
      opt.n_scenarios = a.n;
      opt.seed = a.seed;  // same seed per value: common random numbers
      opt.heuristic.lambda1 = a.lambda1;
      opt.heuristic.lambda2 = v;
      auto results = evaluate(inst, grid, pm, model, {"h2"}, nullptr, opt);
      PolicySummary s = summarize(results.front());
      w.add_row({csv::Writer::cell(v), csv::Writer::cell(s.n),
                 csv::Writer::cell(s.mean_cost_K_min), csv::Writer::cell(s.se_cost_K_min),
                 csv::Writer::cell(s.mean_fuel_L), csv::Writer::cell(s.mean_on_fraction),
                 csv::Writer::cell(s.violation_scenarios)});
      xs.push_back(v);
      ys.push_back(s.mean_cost_K_min);
      if (first || s.mean_cost_K_min < best_cost) {
        best_v = v;
        best_cost = s.mean_cost_K_min;
        first = false;
      }
      std::printf("lambda2 %.2f: mean cost %.6f K*min (se %.6f)\n", v, s.mean_cost_K_min,
                  s.se_cost_K_min);
    }
    w.write_file((fs::path(a.out) / "sweep.csv").string());
    svg::LineChart chart;
    chart.title = "Product pull-down factor sweep";
    chart.x_label = "lambda2";
    chart.y_label = "mean cost (K min)";
    chart.add("h2", xs, ys);
    svg::write_file((fs::path(a.out) / "sweep.svg").string(), chart.render());
    std::printf("best lambda2 %.2f with mean cost %.6f K*min\n", best_v, best_cost);
  } catch (const std::invalid_argument& e) {
    return fail(2, e.what());
  } catch (const std::exception& e) {
    return fail(3, e.what());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// run-experiment / report

struct ExperimentConfig {
  std::vector<std::string> routes;
  std::vector<double> capacities_kW;
  std::vector<double> h_W_per_m2K;
  std::vector<std::string> policies;
  std::string door_model;
  std::string out_dir;
  int lattice_nodes = 30;
  int lattice_samples = 1000;
  std::uint64_t lattice_seed = 1;
  int train_iterations = 150;
  std::uint64_t train_seed = 1;
  int eval_n = 1000;
  std::uint64_t eval_seed = 99;
  double lambda1 = 0.5;
  double lambda2 = 1.0;
  bool log_scale = false;
  // Optional fuel-budget frontier on one reference cell.
  bool frontier = false;
  std::string frontier_route;
  double frontier_capacity_kW = 12;
  double frontier_h = 4;
  std::vector<double> frontier_factors{0.55, 0.65, 0.75, 0.85, 0.95, 1.05};
  int frontier_n = 200;
};

ExperimentConfig parse_experiment_config(const std::string& path) {
  toml::Table t = toml::parse_file(path);
  ExperimentConfig c;
  c.routes = toml::get_string_array(t, "experiment.routes", {});
  c.capacities_kW = toml::get_double_array(t, "experiment.capacities_kW", {8, 10, 12});
  c.h_W_per_m2K = toml::get_double_array(t, "experiment.h_W_per_m2K", {2, 4, 6});
  c.policies = toml::get_string_array(t, "experiment.policies",
                                      {"h1", "h2", "rlp", "sp", "clv"});
  c.door_model = toml::get_string(t, "experiment.door_model", "");
  c.out_dir = toml::get_string(t, "experiment.out_dir", "results");
  c.lattice_nodes = toml::get_int(t, "lattice.nodes", 30);
  c.lattice_samples = toml::get_int(t, "lattice.samples", 1000);
  c.lattice_seed = static_cast<std::uint64_t>(toml::get_int(t, "lattice.seed", 1));
  c.train_iterations = toml::get_int(t, "train.iterations", 150);
  c.train_seed = static_cast<std::uint64_t>(toml::get_int(t, "train.seed", 1));
  c.eval_n = toml::get_int(t, "evaluate.n", 1000);
  c.eval_seed = static_cast<std::uint64_t>(toml::get_int(t, "evaluate.seed", 99));
  c.lambda1 = toml::get_double(t, "evaluate.lambda1", 0.5);
  c.lambda2 = toml::get_double(t, "evaluate.lambda2", 1.0);
  c.log_scale = toml::get_bool(t, "report.log_scale", false);
  for (const auto& [key, value] : t)
    if (key.rfind("frontier.", 0) == 0) c.frontier = true;
  if (c.frontier) {
    c.frontier_route = toml::get_string(t, "frontier.route", "");
    c.frontier_capacity_kW = toml::get_double(t, "frontier.capacity_kW", 12);
    c.frontier_h = toml::get_double(t, "frontier.h_W_per_m2K", 4);
    c.frontier_factors = toml::get_double_array(t, "frontier.budget_factors",
                                                {0.55, 0.65, 0.75, 0.85, 0.95, 1.05});
    c.frontier_n = toml::get_int(t, "frontier.n", 200);
    if (c.frontier_route.empty())
      c.frontier_route = c.routes.empty() ? std::string() : c.routes.front();
  }
  if (c.routes.empty()) throw std::invalid_argument("experiment.routes must be non-empty");
  if (c.capacities_kW.empty() || c.h_W_per_m2K.empty())
    throw std::invalid_argument("experiment grid must be non-empty");
  for (double v : c.capacities_kW)
    if (v <= 0) throw std::invalid_argument("capacities_kW must be positive");
  for (double v : c.h_W_per_m2K)
    if (v <= 0) throw std::invalid_argument("h_W_per_m2K must be positive");
  if (c.door_model.empty()) throw std::invalid_argument("experiment.door_model is required");
  if (c.policies.empty()) throw std::invalid_argument("experiment.policies must be non-empty");
  return c;
}

struct CellSpec {
  std::string route_path;
  std::string route_name;
  double cap_kW = 0;
  double h = 0;
  std::string dir;
};

struct CellOutcome {
  std::string status = "ok";
  double train_seconds = 0;
  double sp_lower_bound = std::numeric_limits<double>::quiet_NaN();
  std::map<std::string, PolicySummary> by_policy;
};

RouteInstance cell_instance(const RouteInstance& base, double cap_kW, double h) {
  RouteInstance inst = base;
  inst.thermo.power_cap_W = cap_kW * 1000.0;
  for (auto& c : inst.classes) c.surface_coeff_W_per_m2K = h;
  return inst;
}

void run_cell(const CellSpec& cell, const RouteInstance& base, const PowerModels& pm,
              const DoorTimeModel& door, const ExperimentConfig& cfg, CellOutcome* out) {
  std::ofstream log(fs::path(cell.dir) / "cell.log");
  try {
    log << "route " << cell.route_name << " capacity " << cell.cap_kW << " kW, h " << cell.h
        << " W/(m2 K)\n"
        << std::flush;
    RouteInstance inst = cell_instance(base, cell.cap_kW, cell.h);
    ScenarioModel model(&inst, door);
    ScenarioLattice lat =
        build_lattice(model, cfg.lattice_nodes, cfg.lattice_samples, cfg.lattice_seed);
    TimeGrid grid(inst, lat.handling_slots);
    log << "lattice built: " << lat.n_stages() << " stages x " << cfg.lattice_nodes
        << " nodes\n"
        << std::flush;

    bool want_sp = std::find(cfg.policies.begin(), cfg.policies.end(), "sp") !=
                   cfg.policies.end();
    ValueFunction vf;
    if (want_sp) {
      TrainOptions topt;
      topt.iterations = cfg.train_iterations;
      topt.seed = cfg.train_seed;
      TrainResult res = train(inst, grid, pm, lat, topt);
      vf = std::move(res.value);
      out->train_seconds = res.report.train_seconds;
      out->sp_lower_bound = res.report.lower_bound_K_min.back();
      write_text((fs::path(cell.dir) / "cuts.json").string(), value_function_to_json(vf));
      write_text((fs::path(cell.dir) / "train_report.csv").string(),
                 train_report_to_csv(res.report));
      log << "trained " << res.report.iterations_run << " iterations in "
          << res.report.train_seconds << " s, lower bound "
          << res.report.lower_bound_K_min.back() << " K*min\n"
          << std::flush;
    }

    EvaluateOptions eopt;
    eopt.n_scenarios = cfg.eval_n;
    eopt.seed = cfg.eval_seed;
    eopt.heuristic.lambda1 = cfg.lambda1;
    eopt.heuristic.lambda2 = cfg.lambda2;
    auto results = evaluate(inst, grid, pm, model, cfg.policies, want_sp ? &vf : nullptr, eopt);
    write_text((fs::path(cell.dir) / "results.csv").string(), results_to_csv(results));
    write_text((fs::path(cell.dir) / "summary.csv").string(), summary_to_csv(results));
    for (const auto& r : results) {
      PolicySummary s = summarize(r);
      log << r.policy << ": mean " << s.mean_cost_K_min << " K*min, se " << s.se_cost_K_min
          << ", violations " << s.violation_scenarios << "\n";
      out->by_policy[r.policy] = s;
    }
    log << "ok\n";
  } catch (const std::exception& e) {
    out->status = e.what();
    log << "error: " << e.what() << "\n";
  }
}

std::vector<std::string> aggregate_header(const std::vector<std::string>& policies) {
  std::vector<std::string> h{"route", "capacity_kW", "h_W_per_m2K", "status",
                             "train_seconds", "sp_lower_bound_K_min"};
  for (const auto& p : policies) {
    h.push_back(p + "_mean_cost_K_min");
    h.push_back(p + "_se_cost_K_min");
    h.push_back(p + "_mean_fuel_L");
    h.push_back(p + "_violation_scenarios");
  }
  return h;
}

void write_aggregate(const std::string& path, const std::vector<CellSpec>& cells,
                     const std::vector<CellOutcome>& outcomes,
                     const std::vector<std::string>& policies) {
  csv::Writer w(aggregate_header(policies));
  for (size_t i = 0; i < cells.size(); ++i) {
    const CellSpec& c = cells[i];
    const CellOutcome& o = outcomes[i];
    std::vector<std::string> row{c.route_name, csv::Writer::cell(c.cap_kW),
                                 csv::Writer::cell(c.h), o.status,
                                 csv::Writer::cell(o.train_seconds),
                                 std::isnan(o.sp_lower_bound)
                                     ? std::string()
                                     : csv::Writer::cell(o.sp_lower_bound)};
    for (const auto& p : policies) {
      auto it = o.by_policy.find(p);
      if (it == o.by_policy.end()) {
        row.insert(row.end(), {"", "", "", ""});
      } else {
        row.push_back(csv::Writer::cell(it->second.mean_cost_K_min));
        row.push_back(csv::Writer::cell(it->second.se_cost_K_min));
        row.push_back(csv::Writer::cell(it->second.mean_fuel_L));
        row.push_back(csv::Writer::cell(it->second.violation_scenarios));
      }
    }
    w.add_row(row);
  }
  w.write_file(path);
}

// Grouped-average tables and charts from an aggregate table. Policies are
// recovered from the *_mean_cost_K_min columns so report works on any
// aggregate produced by run-experiment.
void emit_report(const csv::Table& agg, const std::string& out_dir, bool log_scale) {
  const std::string suffix = "_mean_cost_K_min";
  std::vector<std::string> policies;
  for (const auto& col : agg.header)
    if (col.size() > suffix.size() &&
        col.compare(col.size() - suffix.size(), suffix.size(), suffix) == 0 &&
        col != "sp_lower_bound_K_min")
      policies.push_back(col.substr(0, col.size() - suffix.size()));
  if (policies.empty()) throw std::invalid_argument("aggregate has no policy columns");
  int status_col = agg.column("status");

  struct Group {
    std::vector<double> sum;
    int n = 0;
  };
  auto grouped = [&](const std::string& key_col) {
    int kc = agg.column(key_col);
    if (kc < 0) throw std::invalid_argument("aggregate is missing column " + key_col);
    std::vector<std::string> order;
    std::map<std::string, Group> groups;
    for (const auto& row : agg.rows) {
      if (status_col >= 0 && row[static_cast<size_t>(status_col)] != "ok") continue;
      const std::string& key = row[static_cast<size_t>(kc)];
      if (!groups.count(key)) {
        order.push_back(key);
        groups[key].sum.assign(policies.size(), 0.0);
      }
      Group& g = groups[key];
      g.n += 1;
      for (size_t p = 0; p < policies.size(); ++p) {
        int pc = agg.column(policies[p] + suffix);
        g.sum[p] += std::stod(row[static_cast<size_t>(pc)]);
      }
    }
    return std::pair(order, groups);
  };

  struct Dimension {
    std::string key_col, file_stem, title, unit;
  };
  const std::vector<Dimension> dims{
      {"route", "by_route", "Mean cost by route", ""},
      {"capacity_kW", "by_capacity", "Mean cost by cooling capacity", " kW"},
      {"h_W_per_m2K", "by_h", "Mean cost by product heat transfer", " W/(m2 K)"},
  };
  for (const auto& d : dims) {
    auto [order, groups] = grouped(d.key_col);
    std::vector<std::string> header{d.key_col, "cells"};
    for (const auto& p : policies) header.push_back(p + suffix);
    csv::Writer w(header);
    svg::BarChart chart;
    chart.title = d.title;
    chart.y_label = "mean cost (K min)";
    chart.log_y = log_scale;
    chart.series = policies;
    for (const auto& key : order) {
      const Group& g = groups[key];
      std::vector<std::string> row{key, csv::Writer::cell(g.n)};
      svg::BarGroup bg;
      bg.label = key + d.unit;
      for (size_t p = 0; p < policies.size(); ++p) {
        double mean = g.sum[p] / g.n;
        row.push_back(csv::Writer::cell(mean));
        bg.values.push_back(mean);
      }
      w.add_row(row);
      chart.groups.push_back(std::move(bg));
    }
    w.write_file((fs::path(out_dir) / ("report_" + d.file_stem + ".csv")).string());
    svg::write_file((fs::path(out_dir) / ("fig_" + d.file_stem + ".svg")).string(),
                    chart.render());
  }

  // Overall policy means: the bar heights step down with the amount of
  // information each policy uses, so consecutive differences read as the
  // value of that information.
  {
    std::vector<double> sum(policies.size(), 0.0);
    int n = 0;
    for (const auto& row : agg.rows) {
      if (status_col >= 0 && row[static_cast<size_t>(status_col)] != "ok") continue;
      n += 1;
      for (size_t p = 0; p < policies.size(); ++p)
        sum[p] += std::stod(row[static_cast<size_t>(agg.column(policies[p] + suffix))]);
    }
    if (n == 0) throw std::invalid_argument("aggregate has no successful rows");
    std::vector<std::string> header{"policy", "mean_cost_K_min"};
    csv::Writer w(header);
    svg::BarChart chart;
    chart.title = "Mean cost by policy (all cells)";
    chart.y_label = "mean cost (K min)";
    chart.log_y = log_scale;
    chart.series = {"mean over cells"};
    for (size_t p = 0; p < policies.size(); ++p) {
      w.add_row({policies[p], csv::Writer::cell(sum[p] / n)});
      svg::BarGroup bg;
      bg.label = policies[p];
      bg.values = {sum[p] / n};
      chart.groups.push_back(std::move(bg));
    }
    w.write_file((fs::path(out_dir) / "report_policy_means.csv").string());
    svg::write_file((fs::path(out_dir) / "fig_policy_means.svg").string(), chart.render());
  }
}

void run_frontier(const ExperimentConfig& cfg, const DoorTimeModel& door,
                  const std::string& out_dir) {
  RouteInstance base = load_instance(cfg.frontier_route);
  RouteInstance inst = cell_instance(base, cfg.frontier_capacity_kW, cfg.frontier_h);
  PowerModels pm = fit_power(inst, 4, 20240901);
  ScenarioModel model(&inst, door);
  ScenarioLattice lat =
      build_lattice(model, cfg.lattice_nodes, cfg.lattice_samples, cfg.lattice_seed);
  TimeGrid grid(inst, lat.handling_slots);

  // Reference fuel use: the unconstrained stochastic policy.
  TrainOptions topt;
  topt.iterations = cfg.train_iterations;
  topt.seed = cfg.train_seed;
  TrainResult unconstrained = train(inst, grid, pm, lat, topt);
  EvaluateOptions eopt;
  eopt.n_scenarios = cfg.frontier_n;
  eopt.seed = cfg.eval_seed;
  auto ref = evaluate(inst, grid, pm, model, {"sp"}, &unconstrained.value, eopt);
  double ref_fuel = summarize(ref.front()).mean_fuel_L;
  std::printf("frontier reference: mean fuel %.4f L unconstrained\n", ref_fuel);

  csv::Writer w({"budget_L", "budget_factor", "policy", "n", "mean_cost_K_min",
                 "se_cost_K_min", "mean_fuel_L", "violation_scenarios", "max_mu_L"});
  std::vector<double> budgets;
  std::map<std::string, std::vector<double>> viol;
  for (double f : cfg.frontier_factors) {
    double budget = f * ref_fuel;
    TrainOptions bt = topt;
    bt.with_fuel = true;
    bt.fuel_budget_L = budget;
    TrainResult res = train(inst, grid, pm, lat, bt);
    EvaluateOptions be = eopt;
    be.with_fuel = true;
    be.fuel_budget_L = budget;
    auto results = evaluate(inst, grid, pm, model, {"sp", "rlp"}, &res.value, be);
    budgets.push_back(budget);
    for (const auto& r : results) {
      PolicySummary s = summarize(r);
      double max_mu = 0;
      for (const auto& m : r.per_scenario) max_mu = std::max(max_mu, m.max_mu_L);
      w.add_row({csv::Writer::cell(budget), csv::Writer::cell(f), r.policy,
                 csv::Writer::cell(s.n), csv::Writer::cell(s.mean_cost_K_min),
                 csv::Writer::cell(s.se_cost_K_min), csv::Writer::cell(s.mean_fuel_L),
                 csv::Writer::cell(s.violation_scenarios), csv::Writer::cell(max_mu)});
      viol[r.policy].push_back(s.violation_scenarios);
      std::printf("budget %.4f L (%.2fx): %s violations %d, mean cost %.6f K*min\n", budget,
                  f, r.policy.c_str(), s.violation_scenarios, s.mean_cost_K_min);
    }
  }
  w.write_file((fs::path(out_dir) / "frontier.csv").string());
  svg::LineChart chart;
  chart.title = "Violation frontier under fuel budgets";
  chart.x_label = "fuel budget (L)";
  chart.y_label = "violation scenarios";
  for (const auto& [policy, ys] : viol) chart.add(policy, budgets, ys);
  svg::write_file((fs::path(out_dir) / "fig_frontier.svg").string(), chart.render());
}

struct RunExperimentArgs {
  std::string config;
  std::string out_override;
};

int cmd_run_experiment(const RunExperimentArgs& a) {
  ExperimentConfig cfg;
  std::map<std::string, RouteInstance> bases;
  DoorTimeModel door;
  try {
    cfg = parse_experiment_config(a.config);
    if (!a.out_override.empty()) cfg.out_dir = a.out_override;
    for (const auto& r : cfg.routes)
      if (!bases.count(r)) bases.emplace(r, load_instance(r));
    door = load_door_time_model(cfg.door_model);
    fs::create_directories(cfg.out_dir);
  } catch (const std::exception& e) {
    return fail(2, e.what());
  }
  try {
    // The power map depends on the route's ambient profile only, so one fit
    // per route is shared by all its capacity/h cells.
    std::map<std::string, PowerModels> powers;
    for (const auto& [path, inst] : bases) powers.emplace(path, fit_power(inst, 4, 20240901));

    std::vector<CellSpec> cells;
    for (const auto& r : cfg.routes)
      for (double cap : cfg.capacities_kW)
        for (double h : cfg.h_W_per_m2K) {
          CellSpec c;
          c.route_path = r;
          c.route_name = fs::path(r).stem().string();
          c.cap_kW = cap;
          c.h = h;
          c.dir = (fs::path(cfg.out_dir) /
                   (c.route_name + "_w" + g6(cap) + "kW_h" + g6(h)))
                      .string();
          cells.push_back(std::move(c));
        }
    for (const auto& c : cells) fs::create_directories(c.dir);

    std::vector<CellOutcome> outcomes(cells.size());
    std::atomic<size_t> next{0};
    std::atomic<int> done{0};
    std::mutex print_mu;
    int threads = worker_count(static_cast<int>(cells.size()));
    std::printf("running %zu cells on %d worker(s)\n", cells.size(), threads);
    auto work = [&] {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= cells.size()) return;
        run_cell(cells[i], bases.at(cells[i].route_path), powers.at(cells[i].route_path),
                 door, cfg, &outcomes[i]);
        int k = done.fetch_add(1) + 1;
        std::lock_guard<std::mutex> lock(print_mu);
        std::printf("[%d/%zu] %s: %s\n", k, cells.size(),
                    fs::path(cells[i].dir).filename().c_str(),
                    outcomes[i].status == "ok" ? "ok" : outcomes[i].status.c_str());
        std::fflush(stdout);
      }
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    std::string agg_path = (fs::path(cfg.out_dir) / "aggregate.csv").string();
    write_aggregate(agg_path, cells, outcomes, cfg.policies);
    emit_report(csv::read_file(agg_path), cfg.out_dir, cfg.log_scale);
    if (cfg.frontier) run_frontier(cfg, door, cfg.out_dir);

    int failed = 0;
    for (const auto& o : outcomes) failed += o.status != "ok";
    std::printf("done: %zu cells, %d failed; aggregate at %s\n", cells.size(), failed,
                agg_path.c_str());
  } catch (const std::invalid_argument& e) {
    return fail(2, e.what());
  } catch (const std::exception& e) {
    return fail(3, e.what());
  }
  return 0;
}

struct ReportArgs {
  std::string results;
  std::string out;
  bool log_scale = false;
};

int cmd_report(const ReportArgs& a) {
  csv::Table agg;
  std::string out_dir = a.out.empty() ? a.results : a.out;
  try {
    agg = csv::read_file((fs::path(a.results) / "aggregate.csv").string());
    fs::create_directories(out_dir);
  } catch (const std::exception& e) {
    return fail(2, e.what());
  }
  try {
    emit_report(agg, out_dir, a.log_scale);
    std::printf("wrote grouped tables and charts to %s\n", out_dir.c_str());
  } catch (const std::invalid_argument& e) {
    return fail(2, e.what());
  } catch (const std::exception& e) {
    return fail(3, e.what());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Refrigeration control for fixed-route cold chain trucks"};
  app.require_subcommand(1);

  FitPowerArgs fp;
  auto* fit = app.add_subcommand("fit-power",
                                 "Fit max-affine cooling power maps per ambient bucket");
  fit->add_option("--instance", fp.instance, "Route instance JSON")->required();
  fit->add_option("--out", fp.out, "Output directory");
  fit->add_option("--planes", fp.planes, "Planes per bucket")->check(CLI::PositiveNumber);
  fit->add_option("--seed", fp.seed, "Fit RNG seed");

  BuildLatticeArgs bl;
  auto* lat = app.add_subcommand("build-lattice",
                                 "Quantize the stagewise scenario distribution by k-means");
  lat->add_option("--instance", bl.instance, "Route instance JSON")->required();
  lat->add_option("--door-model", bl.door_model, "Door-time model JSON")->required();
  lat->add_option("--nodes", bl.nodes, "Nodes per stage")->check(CLI::PositiveNumber);
  lat->add_option("--samples", bl.samples, "Generation sample size")
      ->check(CLI::PositiveNumber);
  lat->add_option("--seed", bl.seed, "Sampling seed");
  lat->add_option("--out", bl.out, "Output lattice JSON path");
  lat->add_option("--sse-trace", bl.sse_trace, "Optional CSV of k-means SSE per iteration");
  lat->add_flag("--fix-temps", bl.fix_temps, "Freeze arrival temperatures at expectations");
  lat->add_flag("--fix-door-times", bl.fix_door_times, "Freeze door times at expectations");

  TrainArgs tr;
  auto* trn = app.add_subcommand("train", "Train the stochastic cooling policy");
  trn->add_option("--instance", tr.instance, "Route instance JSON")->required();
  trn->add_option("--lattice", tr.lattice, "Lattice JSON from build-lattice")->required();
  trn->add_option("--power", tr.power, "Power models JSON (default: fit in process)");
  trn->add_option("--iterations", tr.iterations, "Training iterations")
      ->check(CLI::PositiveNumber);
  trn->add_option("--seed", tr.seed, "Forward-pass sampling seed");
  trn->add_option("--budget-liters", tr.budget_liters,
                  "Fuel budget; enables the fuel state and terminal budget row");
  trn->add_option("--mu-penalty", tr.mu_penalty, "Cost per liter of budget slack");
  trn->add_option("--out", tr.out, "Output directory");

  EvaluateArgs ev;
  auto* evl = app.add_subcommand("evaluate",
                                 "Benchmark policies out of sample with common random numbers");
  evl->add_option("--instance", ev.instance, "Route instance JSON")->required();
  evl->add_option("--lattice", ev.lattice,
                  "Lattice JSON; fixes the simulation grid used in training")
      ->required();
  evl->add_option("--door-model", ev.door_model, "Door-time model JSON")->required();
  evl->add_option("--cuts", ev.cuts, "Value function JSON from train (needed for sp)");
  evl->add_option("--power", ev.power, "Power models JSON (default: fit in process)");
  evl->add_option("--policies", ev.policies, "Comma list from h1,h2,rlp,sp,clv")
      ->delimiter(',');
  evl->add_option("--n", ev.n, "Scenario count")->check(CLI::PositiveNumber);
  evl->add_option("--seed", ev.seed, "Scenario sampling seed");
  evl->add_option("--lambda1", ev.lambda1, "Air-trigger threshold factor");
  evl->add_option("--lambda2", ev.lambda2, "Product pull-down factor");
  evl->add_option("--fuel-budget", ev.fuel_budget, "Fuel budget in liters for sp/rlp");
  evl->add_option("--mu-penalty", ev.mu_penalty, "Cost per liter of budget slack");
  evl->add_option("--benders-gap", ev.benders_gap, "Lookahead convergence gap");
  evl->add_option("--benders-iters", ev.benders_iters, "Lookahead iteration cap");
  evl->add_option("--clv-iters", ev.clv_iters, "Perfect-foresight iteration cap");
  evl->add_flag("--fix-temps", ev.fix_temps, "Freeze arrival temperatures at expectations");
  evl->add_flag("--fix-door-times", ev.fix_door_times, "Freeze door times at expectations");
  evl->add_option("--out", ev.out, "Output directory");

  SweepArgs sw;
  auto* swp = app.add_subcommand("sweep",
                                 "Sweep the product-aware heuristic's pull-down factor");
  swp->add_option("--instance", sw.instance, "Route instance JSON")->required();
  swp->add_option("--lattice", sw.lattice, "Lattice JSON; fixes the simulation grid")
      ->required();
  swp->add_option("--door-model", sw.door_model, "Door-time model JSON")->required();
  swp->add_option("--values", sw.values, "Comma list of lambda2 values")->delimiter(',');
  swp->add_option("--n", sw.n, "Scenario count")->check(CLI::PositiveNumber);
  swp->add_option("--seed", sw.seed, "Scenario sampling seed");
  swp->add_option("--lambda1", sw.lambda1, "Air-trigger threshold factor");
  swp->add_option("--out", sw.out, "Output directory");

  RunExperimentArgs re;
  auto* rex = app.add_subcommand("run-experiment",
                                 "Run the route x capacity x h battery from a TOML config");
  rex->add_option("--config", re.config, "Experiment TOML")->required();
  rex->add_option("--out", re.out_override, "Override the configured output directory");

  ReportArgs rp;
  auto* rep = app.add_subcommand("report", "Regenerate grouped tables and charts");
  rep->add_option("--results", rp.results, "Directory holding aggregate.csv")->required();
  rep->add_option("--out", rp.out, "Output directory (default: results dir)");
  rep->add_flag("--log-scale", rp.log_scale, "Log-scale chart y axes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (fit->parsed()) return cmd_fit_power(fp);
  if (lat->parsed()) return cmd_build_lattice(bl);
  if (trn->parsed()) return cmd_train(tr);
  if (evl->parsed()) return cmd_evaluate(ev);
  if (swp->parsed()) return cmd_sweep(sw);
  if (rex->parsed()) return cmd_run_experiment(re);
  if (rep->parsed()) return cmd_report(rp);
  return 2;
}
