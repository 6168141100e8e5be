#pragma once

// The four benchmark controllers and the trained-policy replay, measured on
// common simulated trajectories: on/off hysteresis heuristics (air-only and
// product-aware), a rolling lookahead that re-plans against expected noise,
// the trained stage decider, and a perfect-foresight per-scenario optimum.
//
// Every policy is reduced to a per-driving-slot fluid temperature and played
// through the same simulator; electric power is recomputed from the fitted
// planes with the unit treated as off when the fluid matches the air, so
// costs, fuel, and duty statistics are directly comparable across policies.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "coldchain/instance.hpp"
#include "coldchain/power.hpp"
#include "coldchain/scenario.hpp"
#include "coldchain/sddp.hpp"
#include "coldchain/thermo.hpp"

namespace coldchain {

struct HeuristicParams {
  double lambda1 = 0.5;  // air-threshold blend between band floor and ceiling
  double lambda2 = 1.0;  // product tolerance share before forced cooling
};

// Air-threshold hysteresis: on when the air exceeds the tightest
// floor + lambda1 * band blend over the cargo; stays on until the air cools
// to the highest product floor.
bool h1_state(double T_air_K, const RouteInstance& inst, const std::vector<int>& cargo,
              bool was_on, double lambda1);

// Product-aware layer: additionally triggers when some product exceeds
// floor + lambda2 * band, and refuses to run while any product sits at or
// below its floor.
bool h2_state(const ThermalState& state, const RouteInstance& inst,
              const std::vector<int>& cargo, bool was_on, const HeuristicParams& params);

// Uniform electric-power accounting for played-back schedules: zero when the
// fluid is at or above the air (unit idle), otherwise the plane surrogate
// clamped at zero.
double playback_power_W(const MaxAffineModel& planes, double tcu_K, double air_K);

struct ScenarioMetrics {
  double cost_K_min = 0;
  double fuel_L = 0;
  double on_fraction = 0;  // share of tour time with the unit drawing > 1 W
  double avg_power_W = 0;  // time-averaged draw over the whole tour
  bool violated = false;   // any comfort-band breach along the trajectory
  double max_mu_L = 0;     // largest budget slack used by decide-time problems
};

struct PolicySummary {
  std::string policy;
  int n = 0;
  double mean_cost_K_min = 0;
  double se_cost_K_min = 0;  // sample std / sqrt(n)
  double mean_fuel_L = 0;
  double mean_on_fraction = 0;
  double mean_avg_power_W = 0;
  int violation_scenarios = 0;
};

struct PolicyResult {
  std::string policy;
  std::vector<ScenarioMetrics> per_scenario;
};

PolicySummary summarize(const PolicyResult& r);

ScenarioMetrics metrics_from_trajectory(const TrajectoryResult& tr);

// Simulates one scenario under the on/off rule (product_aware selects the
// second heuristic). The unit is forced off during handling; hysteresis
// memory carries across it.
ScenarioMetrics run_heuristic(const RouteInstance& inst, const TimeGrid& grid,
                              const PowerModels& power, const ScenarioPath& path,
                              const HeuristicParams& params, bool product_aware,
                              TrajectoryResult* traj = nullptr);

// Plays a fixed per-driving-slot fluid schedule (indexed by global interval;
// handling entries are ignored) through the simulator.
ScenarioMetrics play_schedule(const RouteInstance& inst, const TimeGrid& grid,
                              const PowerModels& power, const ScenarioPath& path,
                              const std::vector<double>& tcu_by_interval,
                              TrajectoryResult* traj = nullptr);

struct DecidePolicyOptions {
  bool with_fuel = false;
  double fuel_budget_L = 0;
  double mu_penalty_per_L = 10000;
};

// Replays a trained value function: at the start of each stage's driving
// phase the boundary state read off the simulator pins a driving-only stage
// problem, whose schedule is followed for that stage.
class SpPolicy {
 public:
  SpPolicy(const StageLpBuilder* builder, const ValueFunction* value,
           DecidePolicyOptions opt = {});
  SpPolicy(const SpPolicy&) = delete;
  SpPolicy& operator=(const SpPolicy&) = delete;

  ScenarioMetrics run(const ScenarioPath& path, TrajectoryResult* traj = nullptr);

 private:
  const StageLpBuilder* builder_;
  const ValueFunction* value_;
  DecidePolicyOptions opt_;
  StageDecider decider_;
};

struct RlpOptions {
  bool with_fuel = false;
  double fuel_budget_L = 0;
  double mu_penalty_per_L = 10000;
  double gap = 1e-7;
  int max_iterations = 200;
};

// Rolling lookahead: each stage decision solves the deterministic program
// from that stage to the horizon with future noise at its expectation,
// decomposed into the driving-only root plus full expectation stages tied
// together by cuts. The expectation tail is scenario-independent, so cut
// pools persist across rolls and scenarios and later solves converge in a
// step or two.
class RlpPolicy {
 public:
  RlpPolicy(const StageLpBuilder* builder, const ScenarioModel* model, RlpOptions opt = {});
  RlpPolicy(const RlpPolicy&) = delete;
  RlpPolicy& operator=(const RlpPolicy&) = delete;

  StageDecision decide(int stage, const std::vector<double>& state);
  ScenarioMetrics run(const ScenarioPath& path, TrajectoryResult* traj = nullptr);

 private:
  const StageLpBuilder* builder_;
  RlpOptions opt_;
  ScenarioLattice expectation_;
  StageDecider root_;
  LatticeSolvers tail_;
  std::vector<std::vector<Cut>> pools_;
};

struct ClvOptions {
  bool with_fuel = false;
  double fuel_budget_L = 0;
  double mu_penalty_per_L = 10000;
  double gap = 1e-7;
  int max_iterations = 300;
};

// Perfect-foresight bound: the deterministic program on the realized noise,
// solved to the gap and played back. optimum_K_min receives the converged
// bound (playback cost matches it up to LP tolerance).
ScenarioMetrics clv_metrics(const RouteInstance& inst, const TimeGrid& grid,
                            const PowerModels& power, const ScenarioPath& path,
                            const ClvOptions& opt = {}, TrajectoryResult* traj = nullptr,
                            double* optimum_K_min = nullptr);

struct EvaluateOptions {
  int n_scenarios = 1000;
  std::uint64_t seed = 99;
  HeuristicParams heuristic;
  bool with_fuel = false;  // budget variant for the decide-time problems
  double fuel_budget_L = 0;
  double mu_penalty_per_L = 10000;
  double benders_gap = 1e-7;
  int benders_max_iterations = 200;
  int clv_max_iterations = 300;
};

// Common-random-number benchmark: samples one scenario set from the model
// and measures every requested policy on it. Policy names: "h1", "h2",
// "rlp", "sp", "clv"; "sp" requires a trained value function on the same
// grid. Results keep the request order; per-policy scenario order is the
// sample order.
std::vector<PolicyResult> evaluate(const RouteInstance& inst, const TimeGrid& grid,
                                   const PowerModels& power, const ScenarioModel& model,
                                   const std::vector<std::string>& policies,
                                   const ValueFunction* sp_value, const EvaluateOptions& opt);

std::string results_to_csv(const std::vector<PolicyResult>& results);
std::string summary_to_csv(const std::vector<PolicyResult>& results);

}  // namespace coldchain
