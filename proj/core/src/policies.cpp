#include "coldchain/policies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "coldchain/csv.hpp"

namespace coldchain {

bool h1_state(double T_air_K, const RouteInstance& inst, const std::vector<int>& cargo,
              bool was_on, double lambda1) {
  if (cargo.empty()) return false;
  double on_threshold = lp::kInf;
  double off_threshold = -lp::kInf;
  for (int id : cargo) {
    const ProductClass& pc = inst.pallet_class(id);
    on_threshold =
        std::min(on_threshold, pc.temp_min_K + lambda1 * (pc.temp_max_K - pc.temp_min_K));
    off_threshold = std::max(off_threshold, pc.temp_min_K);
  }
  if (T_air_K > on_threshold) return true;
  return was_on && T_air_K > off_threshold;
}

bool h2_state(const ThermalState& state, const RouteInstance& inst,
              const std::vector<int>& cargo, bool was_on, const HeuristicParams& params) {
  if (cargo.empty()) return false;
  double air_threshold = lp::kInf;
  double off_threshold = -lp::kInf;
  double worst_product = -lp::kInf;  // max of (T_p - floor) - lambda2 * band
  double floor_margin = lp::kInf;    // min of T_p - floor
  for (int id : cargo) {
    const ProductClass& pc = inst.pallet_class(id);
    const double band = pc.temp_max_K - pc.temp_min_K;
    const double t = state.pallet_K[static_cast<size_t>(id)];
    air_threshold = std::min(air_threshold, pc.temp_min_K + params.lambda1 * band);
    off_threshold = std::max(off_threshold, pc.temp_min_K);
    worst_product = std::max(worst_product, (t - pc.temp_min_K) - params.lambda2 * band);
    floor_margin = std::min(floor_margin, t - pc.temp_min_K);
  }
  if (floor_margin <= 0) return false;  // a product at its floor vetoes cooling
  if (state.air_K > air_threshold || worst_product > 0) return true;
  return was_on && state.air_K > off_threshold;
}

double playback_power_W(const MaxAffineModel& planes, double tcu_K, double air_K) {
  if (tcu_K >= air_K - 1e-9) return 0.0;
  return std::max(0.0, planes.eval(tcu_K, air_K));
}

PolicySummary summarize(const PolicyResult& r) {
  PolicySummary s;
  s.policy = r.policy;
  s.n = static_cast<int>(r.per_scenario.size());
  if (s.n == 0) return s;
  for (const ScenarioMetrics& m : r.per_scenario) {
    s.mean_cost_K_min += m.cost_K_min;
    s.mean_fuel_L += m.fuel_L;
    s.mean_on_fraction += m.on_fraction;
    s.mean_avg_power_W += m.avg_power_W;
    if (m.violated) ++s.violation_scenarios;
  }
  s.mean_cost_K_min /= s.n;
  s.mean_fuel_L /= s.n;
  s.mean_on_fraction /= s.n;
  s.mean_avg_power_W /= s.n;
  if (s.n >= 2) {
    double ss = 0;
    for (const ScenarioMetrics& m : r.per_scenario) {
      const double d = m.cost_K_min - s.mean_cost_K_min;
      ss += d * d;
    }
    s.se_cost_K_min = std::sqrt(ss / (s.n - 1)) / std::sqrt(static_cast<double>(s.n));
  }
  return s;
}

ScenarioMetrics metrics_from_trajectory(const TrajectoryResult& tr) {
  ScenarioMetrics m;
  m.cost_K_min = tr.cost_K_s / 60.0;
  m.fuel_L = tr.fuel_L;
  double total = 0, on = 0, energy = 0;
  for (size_t i = 0; i < tr.dt_s.size(); ++i) {
    total += tr.dt_s[i];
    energy += tr.w_W[i] * tr.dt_s[i];
    if (tr.w_W[i] > 1.0) on += tr.dt_s[i];
  }
  if (total > 0) {
    m.on_fraction = on / total;
    m.avg_power_W = energy / total;
  }
  m.violated = tr.cost_K_s > 1e-9;
  return m;
}

ScenarioMetrics run_heuristic(const RouteInstance& inst, const TimeGrid& grid,
                              const PowerModels& power, const ScenarioPath& path,
                              const HeuristicParams& params, bool product_aware,
                              TrajectoryResult* traj) {
  const int S = inst.n_stages();
  std::vector<std::vector<int>> cargo(static_cast<size_t>(S) + 1);
  for (int s = 1; s <= S; ++s) cargo[static_cast<size_t>(s)] = inst.cargo_driving(s);
  const double floor_K = inst.thermo.fluid_floor_K;
  const double cap_W = inst.thermo.power_cap_W;

  bool prev_on = false;
  ControlPolicy pol = [&](int interval, const ThermalState& st) {
    const int s = grid.stage_of_interval(interval);
    const std::vector<int>& on_board = cargo[static_cast<size_t>(s)];
    const bool on = product_aware
                        ? h2_state(st, inst, on_board, prev_on, params)
                        : h1_state(st.air_K, inst, on_board, prev_on, params.lambda1);
    prev_on = on;
    ControlDecision d;
    if (!on) {
      d.T_cu_K = st.air_K;
      d.W_watts = 0;
      return d;
    }
    const MaxAffineModel& planes = power.for_ext(grid.ext_temp_K(interval));
    d.T_cu_K = planes.eval(floor_K, st.air_K) <= cap_W
                   ? floor_K
                   : tcu_for_power(planes, st.air_K, cap_W, floor_K);
    d.W_watts = playback_power_W(planes, d.T_cu_K, st.air_K);
    return d;
  };
  TrajectoryResult tr = simulate_trajectory(inst, grid, path, pol);
  ScenarioMetrics m = metrics_from_trajectory(tr);
  if (traj) *traj = std::move(tr);
  return m;
}

ScenarioMetrics play_schedule(const RouteInstance& inst, const TimeGrid& grid,
                              const PowerModels& power, const ScenarioPath& path,
                              const std::vector<double>& tcu_by_interval,
                              TrajectoryResult* traj) {
  if (tcu_by_interval.size() != static_cast<size_t>(grid.total_intervals()))
    throw std::invalid_argument("play_schedule: schedule length mismatch");
  ControlPolicy pol = [&](int interval, const ThermalState& st) {
    ControlDecision d;
    const double t = tcu_by_interval[static_cast<size_t>(interval)];
    d.T_cu_K = std::isnan(t) ? st.air_K : t;
    const MaxAffineModel& planes = power.for_ext(grid.ext_temp_K(interval));
    d.W_watts = playback_power_W(planes, d.T_cu_K, st.air_K);
    return d;
  };
  TrajectoryResult tr = simulate_trajectory(inst, grid, path, pol);
  ScenarioMetrics m = metrics_from_trajectory(tr);
  if (traj) *traj = std::move(tr);
  return m;
}

namespace {

// Shared stage-walk replay: at the first driving slot of each stage the
// boundary state read off the simulator pins a stage decision, whose fluid
// schedule is followed through the stage. Power and fuel follow the playback
// accounting so the pinned fuel coordinate matches the measured trajectory.
template <class DecideFn>
ScenarioMetrics run_decided(const StageLpBuilder& builder, const ScenarioPath& path,
                            bool with_fuel, DecideFn&& decide, TrajectoryResult* traj) {
  const RouteInstance& inst = builder.instance();
  const TimeGrid& grid = builder.grid();
  const PowerModels& power = builder.power();
  const int S = inst.n_stages();
  std::vector<std::vector<int>> cargo(static_cast<size_t>(S) + 1);
  for (int s = 1; s <= S; ++s) cargo[static_cast<size_t>(s)] = inst.cargo_driving(s);

  std::vector<double> sched;
  double fuel_running = 0;
  double max_mu = 0;
  ControlPolicy pol = [&](int interval, const ThermalState& st) {
    const int s = grid.stage_of_interval(interval);
    const int d0 = grid.driving_begin(s);
    if (interval == d0) {
      std::vector<double> pins;
      pins.reserve(cargo[static_cast<size_t>(s)].size() + 2);
      pins.push_back(st.air_K);
      for (int id : cargo[static_cast<size_t>(s)])
        pins.push_back(st.pallet_K[static_cast<size_t>(id)]);
      if (with_fuel) pins.push_back(fuel_running);
      StageDecision dec = decide(s, pins);
      sched = std::move(dec.tcu_K);
      max_mu = std::max(max_mu, dec.mu_L);
    }
    ControlDecision d;
    d.T_cu_K = sched.at(static_cast<size_t>(interval - d0));
    const MaxAffineModel& planes = power.for_ext(grid.ext_temp_K(interval));
    d.W_watts = playback_power_W(planes, d.T_cu_K, st.air_K);
    fuel_running += d.W_watts * grid.delta_drive_s() / inst.thermo.fuel_energy_J_per_L;
    return d;
  };
  TrajectoryResult tr = simulate_trajectory(inst, grid, path, pol);
  ScenarioMetrics m = metrics_from_trajectory(tr);
  m.max_mu_L = max_mu;
  if (traj) *traj = std::move(tr);
  return m;
}

}  // namespace

SpPolicy::SpPolicy(const StageLpBuilder* builder, const ValueFunction* value,
                   DecidePolicyOptions opt)
    : builder_(builder),
      value_(value),
      opt_(opt),
      decider_(builder, [&] {
        StageLpOptions o;
        o.with_fuel = opt.with_fuel;
        o.fuel_budget_L = opt.fuel_budget_L;
        o.mu_penalty_per_L = opt.mu_penalty_per_L;
        return o;
      }()) {
  if (value_->n_stages != builder_->instance().n_stages())
    throw std::invalid_argument("sp policy: value function stage count mismatch");
  if (value_->with_fuel != opt_.with_fuel)
    throw std::invalid_argument("sp policy: value function fuel state mismatch");
}

ScenarioMetrics SpPolicy::run(const ScenarioPath& path, TrajectoryResult* traj) {
  return run_decided(
      *builder_, path, opt_.with_fuel,
      [&](int stage, const std::vector<double>& pins) {
        return decider_.decide(stage, pins, value_->at(stage));
      },
      traj);
}

RlpPolicy::RlpPolicy(const StageLpBuilder* builder, const ScenarioModel* model, RlpOptions opt)
    : builder_(builder),
      opt_(opt),
      expectation_([&] {
        const TimeGrid& g = builder->grid();
        const int S = builder->instance().n_stages();
        ScenarioLattice lat;
        lat.nodes_per_stage = 1;
        lat.stages.resize(static_cast<size_t>(S));
        lat.handling_slots.resize(static_cast<size_t>(S));
        lat.max_door_open_s.resize(static_cast<size_t>(S));
        for (int s = 1; s <= S; ++s) {
          const StageXi& xi = model->expected_stage(s);
          lat.stages[static_cast<size_t>(s - 1)].nodes = {{xi, 1.0}};
          lat.handling_slots[static_cast<size_t>(s - 1)] = g.handling_slots(s);
          lat.max_door_open_s[static_cast<size_t>(s - 1)] = xi.door_open_s;
        }
        return lat;
      }()),
      root_(builder,
            [&] {
              StageLpOptions o;
              o.with_fuel = opt.with_fuel;
              o.fuel_budget_L = opt.fuel_budget_L;
              o.mu_penalty_per_L = opt.mu_penalty_per_L;
              return o;
            }()),
      tail_(builder, &expectation_,
            [&] {
              StageLpOptions o;
              o.with_fuel = opt.with_fuel;
              o.fuel_budget_L = opt.fuel_budget_L;
              o.mu_penalty_per_L = opt.mu_penalty_per_L;
              return o;
            }()),
      pools_(static_cast<size_t>(builder->instance().n_stages()) + 1) {}

StageDecision RlpPolicy::decide(int stage, const std::vector<double>& state) {
  const int S = builder_->instance().n_stages();
  StageDecision best = root_.decide(stage, state, pools_[static_cast<size_t>(stage)]);
  if (stage == S) return best;

  for (int it = 1; it <= opt_.max_iterations; ++it) {
    // Evaluate the root plan through the expectation tail.
    std::vector<std::vector<double>> xs(static_cast<size_t>(S) + 1);
    xs[static_cast<size_t>(stage)] = best.end_state;
    double ub = best.immediate_K_min;
    for (int s = stage + 1; s <= S; ++s) {
      const lp::Solution& sol = tail_.solve(s, 0, xs[static_cast<size_t>(s - 1)], pools_);
      const StageLp& lay = tail_.layout(s, 0);
      const double theta =
          lay.theta_col >= 0 ? sol.x[static_cast<size_t>(lay.theta_col)] : 0.0;
      ub += sol.objective - theta;
      if (s < S) {
        std::vector<double>& x = xs[static_cast<size_t>(s)];
        x.resize(lay.end_state_cols.size());
        for (size_t j = 0; j < x.size(); ++j)
          x[j] = sol.x[static_cast<size_t>(lay.end_state_cols[j])];
      }
    }
    if (ub - best.objective_K_min <= opt_.gap * std::max(1.0, std::abs(ub))) return best;

    // Tighten the tail pools along the visited chain, then re-plan the root.
    for (int s = S - 1; s >= stage; --s) {
      const std::vector<double>& xhat = xs[static_cast<size_t>(s)];
      const lp::Solution& sol = tail_.solve(s + 1, 0, xhat, pools_);
      const StageLp& lay = tail_.layout(s + 1, 0);
      Cut cut;
      cut.stage = s;
      cut.iteration = it;
      cut.gradient.resize(xhat.size());
      double ydotx = 0;
      for (size_t i = 0; i < lay.state_rows.size(); ++i) {
        const double y = sol.row_dual[static_cast<size_t>(lay.state_rows[i])];
        cut.gradient[i] = y;
        ydotx += y * xhat[i];
      }
      cut.intercept = sol.objective - ydotx;
      pools_[static_cast<size_t>(s)].push_back(std::move(cut));
    }
    best = root_.decide(stage, state, pools_[static_cast<size_t>(stage)]);
  }
  return best;
}

ScenarioMetrics RlpPolicy::run(const ScenarioPath& path, TrajectoryResult* traj) {
  return run_decided(
      *builder_, path, opt_.with_fuel,
      [&](int stage, const std::vector<double>& pins) { return decide(stage, pins); }, traj);
}

ScenarioMetrics clv_metrics(const RouteInstance& inst, const TimeGrid& grid,
                            const PowerModels& power, const ScenarioPath& path,
                            const ClvOptions& opt, TrajectoryResult* traj,
                            double* optimum_K_min) {
  const int S = inst.n_stages();
  if (path.n_stages() != S) throw std::invalid_argument("clv: scenario stage count mismatch");
  ScenarioLattice lat;
  lat.nodes_per_stage = 1;
  lat.stages.resize(static_cast<size_t>(S));
  lat.handling_slots.resize(static_cast<size_t>(S));
  lat.max_door_open_s.resize(static_cast<size_t>(S));
  for (int s = 1; s <= S; ++s) {
    StageXi xi;
    xi.door_open_s = path.door_open_s[static_cast<size_t>(s - 1)];
    xi.loaded_temps_K = path.loaded_temps_K[static_cast<size_t>(s - 1)];
    lat.stages[static_cast<size_t>(s - 1)].nodes = {{std::move(xi), 1.0}};
    lat.handling_slots[static_cast<size_t>(s - 1)] = grid.handling_slots(s);
    lat.max_door_open_s[static_cast<size_t>(s - 1)] =
        path.door_open_s[static_cast<size_t>(s - 1)];
  }
  TrainOptions to;
  to.iterations = opt.max_iterations;
  to.deterministic_gap = opt.gap;
  to.with_fuel = opt.with_fuel;
  to.fuel_budget_L = opt.fuel_budget_L;
  to.mu_penalty_per_L = opt.mu_penalty_per_L;
  TrainResult r = train(inst, grid, power, lat, to);
  if (optimum_K_min) *optimum_K_min = r.report.lower_bound_K_min.back();

  std::vector<double> sched(static_cast<size_t>(grid.total_intervals()),
                            std::numeric_limits<double>::quiet_NaN());
  for (int s = 1; s <= S; ++s) {
    const std::vector<double>& tcu = r.report.last_tcu_K[static_cast<size_t>(s - 1)];
    for (size_t d = 0; d < tcu.size(); ++d)
      sched[static_cast<size_t>(grid.driving_begin(s)) + d] = tcu[d];
  }
  return play_schedule(inst, grid, power, path, sched, traj);
}

std::vector<PolicyResult> evaluate(const RouteInstance& inst, const TimeGrid& grid,
                                   const PowerModels& power, const ScenarioModel& model,
                                   const std::vector<std::string>& policies,
                                   const ValueFunction* sp_value, const EvaluateOptions& opt) {
  if (opt.n_scenarios < 1) throw std::invalid_argument("evaluate: need at least one scenario");
  const std::vector<ScenarioPath> paths = model.sample_paths(opt.n_scenarios, opt.seed);
  StageLpBuilder builder(&inst, &grid, &power);

  std::vector<PolicyResult> out;
  for (const std::string& name : policies) {
    PolicyResult pr;
    pr.policy = name;
    pr.per_scenario.reserve(paths.size());
    if (name == "h1" || name == "h2") {
      for (const ScenarioPath& p : paths)
        pr.per_scenario.push_back(
            run_heuristic(inst, grid, power, p, opt.heuristic, name == "h2"));
    } else if (name == "sp") {
      if (!sp_value) throw std::invalid_argument("evaluate: sp requested without a value function");
      DecidePolicyOptions dopt;
      dopt.with_fuel = opt.with_fuel;
      dopt.fuel_budget_L = opt.fuel_budget_L;
      dopt.mu_penalty_per_L = opt.mu_penalty_per_L;
      SpPolicy sp(&builder, sp_value, dopt);
      for (const ScenarioPath& p : paths) pr.per_scenario.push_back(sp.run(p));
    } else if (name == "rlp") {
      RlpOptions ro;
      ro.with_fuel = opt.with_fuel;
      ro.fuel_budget_L = opt.fuel_budget_L;
      ro.mu_penalty_per_L = opt.mu_penalty_per_L;
      ro.gap = opt.benders_gap;
      ro.max_iterations = opt.benders_max_iterations;
      RlpPolicy rlp(&builder, &model, ro);
      for (const ScenarioPath& p : paths) pr.per_scenario.push_back(rlp.run(p));
    } else if (name == "clv") {
      ClvOptions co;
      co.with_fuel = opt.with_fuel;
      co.fuel_budget_L = opt.fuel_budget_L;
      co.mu_penalty_per_L = opt.mu_penalty_per_L;
      co.gap = opt.benders_gap;
      co.max_iterations = opt.clv_max_iterations;
      for (const ScenarioPath& p : paths)
        pr.per_scenario.push_back(clv_metrics(inst, grid, power, p, co));
    } else {
      throw std::invalid_argument("evaluate: unknown policy '" + name + "'");
    }
    out.push_back(std::move(pr));
  }
  return out;
}

std::string results_to_csv(const std::vector<PolicyResult>& results) {
  csv::Writer w({"policy", "scenario", "cost_K_min", "fuel_L", "on_fraction", "avg_power_W",
                 "violated", "mu_L"});
  for (const PolicyResult& pr : results)
    for (size_t i = 0; i < pr.per_scenario.size(); ++i) {
      const ScenarioMetrics& m = pr.per_scenario[i];
      w.add_row({csv::Writer::cell(pr.policy), csv::Writer::cell(static_cast<int>(i)),
                 csv::Writer::cell(m.cost_K_min), csv::Writer::cell(m.fuel_L),
                 csv::Writer::cell(m.on_fraction), csv::Writer::cell(m.avg_power_W),
                 csv::Writer::cell(m.violated ? 1 : 0), csv::Writer::cell(m.max_mu_L)});
    }
  return w.str();
}

std::string summary_to_csv(const std::vector<PolicyResult>& results) {
  csv::Writer w({"policy", "n", "mean_cost_K_min", "se_cost_K_min", "mean_fuel_L",
                 "mean_on_fraction", "mean_avg_power_W", "violation_scenarios"});
  for (const PolicyResult& pr : results) {
    const PolicySummary s = summarize(pr);
    w.add_row({csv::Writer::cell(s.policy), csv::Writer::cell(s.n),
               csv::Writer::cell(s.mean_cost_K_min), csv::Writer::cell(s.se_cost_K_min),
               csv::Writer::cell(s.mean_fuel_L), csv::Writer::cell(s.mean_on_fraction),
               csv::Writer::cell(s.mean_avg_power_W),
               csv::Writer::cell(s.violation_scenarios)});
  }
  return w.str();
}

}  // namespace coldchain
