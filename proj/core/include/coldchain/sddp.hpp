#pragma once

// Lattice SDDP: persistent per-(stage, node) stage problems, one averaged cut
// per iteration from incoming-state duals, and the decide-time stage solver
// that replays a trained value function out of sample.
//
// Training solves full stage problems (handling slots sized by the node's
// door-open time, loaded temperatures pinned to the node's values). The
// forward pass samples one lattice path by node probability and records the
// boundary states it visits; the backward pass re-solves every node of the
// following stage at the visited state and adds a single probability-weighted
// cut. The lower bound is the first-stage optimum and never decreases. On a
// deterministic lattice (one node per stage) the same loop is nested Benders;
// with `deterministic_gap` set it stops once the forward cost meets the
// bound, which is how clairvoyant and lookahead tails are solved.
//
// Out of sample the handling phase carries no decisions, so it is stepped
// numerically outside the LP and the stage problem covers driving only; its
// pin rows receive the post-handling state (StageDecider). Cuts are per
// stage, shared by all nodes, so retrieving the value function involves no
// node lookup while the feasible set uses the true realization.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "coldchain/instance.hpp"
#include "coldchain/power.hpp"
#include "coldchain/scenario.hpp"
#include "coldchain/stage_lp.hpp"

namespace coldchain {

// Cuts bounding the expected cost of stages s+1..S as a function of the
// end-of-stage-s boundary state. Index [s] for s = 1..S-1; [S] stays empty
// (the truck leaves the last stop empty), [0] is unused.
struct ValueFunction {
  int n_stages = 0;
  bool with_fuel = false;
  std::vector<std::vector<Cut>> cuts;

  const std::vector<Cut>& at(int s) const;
  // max(0, best cut) at x in boundary order (air, pallets ascending, fuel).
  double value(int s, const std::vector<double>& x) const;
};

std::string value_function_to_json(const ValueFunction& vf);
ValueFunction value_function_from_json(const std::string& text);
ValueFunction load_value_function(const std::string& path);

struct TrainOptions {
  int iterations = 150;
  std::uint64_t seed = 1;
  bool with_fuel = false;
  double fuel_budget_L = 0;
  double mu_penalty_per_L = 10000;
  // Stop once forward_cost - lower_bound <= gap * max(1, |forward_cost|).
  // Only honored when every stage has a single node, where the forward pass
  // evaluates the current policy exactly; ignored otherwise.
  double deterministic_gap = 0;
};

struct TrainReport {
  std::vector<double> lower_bound_K_min;   // first-stage optimum, per iteration
  std::vector<double> forward_cost_K_min;  // sampled-path cost, per iteration
  // Cooling-fluid schedule of the last forward pass, per stage then driving
  // slot; at convergence on a deterministic lattice this is the optimal plan.
  std::vector<std::vector<double>> last_tcu_K;
  int iterations_run = 0;
  double train_seconds = 0;
};

std::string train_report_to_csv(const TrainReport& r);

struct TrainResult {
  ValueFunction value;
  TrainReport report;
};

// Grid and lattice must agree on handling slot counts; stage 1 must be a
// single deterministic root node. Throws std::runtime_error with stage/node
// diagnostics if any stage problem fails to solve.
TrainResult train(const RouteInstance& inst, const TimeGrid& grid, const PowerModels& power,
                  const ScenarioLattice& lattice, const TrainOptions& opt = {});

// Persistent full-mode solvers, one per (stage, node). A problem is built
// lazily on first visit with a crash basis; later visits are right-hand-side
// edits plus any cut rows appended to the stage's pool since, so re-solves
// stay warm. Pools are append-only and indexed by stage.
class LatticeSolvers {
 public:
  LatticeSolvers(const StageLpBuilder* builder, const ScenarioLattice* lattice,
                 StageLpOptions base);
  ~LatticeSolvers();
  LatticeSolvers(LatticeSolvers&&) noexcept;
  LatticeSolvers& operator=(LatticeSolvers&&) noexcept;

  // `state` follows the pin-row order of the stage problem: boundary of the
  // previous stage in full mode.
  const lp::Solution& solve(int stage, int node, const std::vector<double>& state,
                            const std::vector<std::vector<Cut>>& pools);
  const StageLp& layout(int stage, int node);  // builds on first access

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct StageDecision {
  std::vector<double> tcu_K;      // per driving slot of the stage
  double objective_K_min = 0;     // immediate + cost-to-go estimate
  double immediate_K_min = 0;     // objective minus the epigraph term
  double theta_K_min = 0;
  double mu_L = 0;                // terminal budget slack, last stage only
  std::vector<double> end_state;  // boundary at the end of the stage
};

// Driving-only stage problems with persistent solvers, pinned at the
// post-handling state. `pool` holds cuts on this stage's end boundary and
// must only ever append between calls for the warm basis to stay valid.
class StageDecider {
 public:
  StageDecider(const StageLpBuilder* builder, StageLpOptions base);
  ~StageDecider();
  StageDecider(StageDecider&&) noexcept;
  StageDecider& operator=(StageDecider&&) noexcept;

  StageDecision decide(int stage, const std::vector<double>& state,
                       const std::vector<Cut>& pool);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace coldchain
