#pragma once

// One-stage linear programs for the lattice-trained controller and the
// deterministic lookahead policies.
//
// A stage problem covers the handling phase that opens stage s (absent for
// s=1) followed by its driving phase. Temperatures evolve by the same
// forward-Euler rows the simulator applies, violations enter through per
// interval epigraph variables priced at interval length in minutes, cooling
// power is tied to the fluid temperature by the fitted max-affine planes, and
// an epigraph variable bounded by cuts carries the cost-to-go.
//
// Two layouts share the code path:
//  - full mode (include_handling): the incoming boundary state enters through
//    equality pin rows whose duals are the cut gradient; newly loaded pallet
//    temperatures are pinned to the node's value. Used for training and for
//    the deterministic nested-Benders solves.
//  - driving mode (!include_handling): the handling phase is simulated
//    outside the LP (it contains no decisions), and the pin rows carry the
//    post-handling state directly, so re-solving for a new scenario is a
//    right-hand-side edit on a persistent solver.
//
// Variable order: pinned state copies, then per time point air temperature,
// then pallet temperatures (point-major, ascending pallet id), then per
// driving slot [T_cu, W], then violation variables (interval-major), then the
// fuel pair, then theta and mu. Row order: pin rows, loaded-temp pins, air
// dynamics, pallet dynamics (point-major), plane rows, no-heating rows,
// violation hinges, fuel chain, budget row, cut rows.

#include <cstdint>
#include <string>
#include <vector>

#include "coldchain/instance.hpp"
#include "coldchain/lp.hpp"
#include "coldchain/power.hpp"
#include "coldchain/scenario.hpp"

namespace coldchain {

// Lower bound on the post-decision cost-to-go at the end of `stage`:
// V
//  >= intercept + gradient . x, with x in boundary order (air, pallet
// temperatures ascending id, cumulative fuel when tracked).
struct Cut {
  int stage = 0;
  double intercept = 0;
  std::vector<double> gradient;
  int iteration = 0;
};

struct StageLpOptions {
  bool include_handling = true;
  bool with_theta = true;     // forced off for the terminal stage
  bool with_fuel = false;     // track cumulative fuel as a state coordinate
  double fuel_budget_L = 0;   // terminal budget, only read when with_fuel
  double mu_penalty_per_L = 10000.0;
};

// A built stage problem plus the index maps needed to run it warm.
struct StageLp {
  lp::Model model;

  // Pin rows carrying the incoming state, boundary order of the previous
  // stage (full mode) or of this stage's driving cargo (driving mode).
  std::vector<int> state_rows;
  std::vector<int> state_pallet_ids;  // pallet ids matching state_rows[1..]
  // Rows pinning newly loaded pallet temperatures (full mode only),
  // loaded_at_stage order.
  std::vector<int> xi_temp_rows;

  // End-of-stage boundary state columns: air, pallets ascending id, fuel.
  std::vector<int> end_state_cols;
  std::vector<int> end_pallet_ids;

  std::vector<int> tcu_cols;  // per driving slot
  std::vector<int> w_cols;
  int theta_col = -1;
  int mu_col = -1;
  int fuel_end_col = -1;

  int n_base_rows = 0;  // rows before any cut rows
  std::vector<std::pair<int, int>> crash_basis;
};

// Row form of a cut for Solver::add_row against a built stage problem:
// theta - g . x_end >= intercept.
struct CutRow {
  lp::Sense sense = lp::Sense::GE;
  double rhs = 0;
  std::vector<lp::Entry> entries;
};

class StageLpBuilder {
 public:
  StageLpBuilder(const RouteInstance* inst, const TimeGrid* grid, const PowerModels* power);

  // Boundary coordinate ids at the end of `stage` (cargo_driving order).
  std::vector<int> boundary_pallets(int stage) const;
  int boundary_dim(int stage, bool with_fuel) const;

  // xi supplies the door-open time (full mode) and loaded temperatures of
  // this stage; cuts must all target `stage`. Driving mode ignores
  // xi.door_open_s and expects loaded temperatures folded into the pin state.
  StageLp build(int stage, const StageXi& xi, const std::vector<Cut>& cuts,
                const StageLpOptions& opt) const;

  CutRow cut_row(const StageLp& lp, const Cut& cut) const;

  // Pin-row right-hand sides for a given incoming state, state_rows order.
  // Full mode: state = (air, temps of cargo_driving(stage-1)[, fuel]).
  // Driving mode: state = (air, temps of cargo_driving(stage)[, fuel]).
  static std::vector<double> state_rhs(const StageLp& lp, double air_K,
                                       const std::vector<double>& pallet_temps_K,
                                       double fuel_L = 0);

  const RouteInstance& instance() const { return *inst_; }
  const TimeGrid& grid() const { return *grid_; }
  const PowerModels& power() const { return *power_; }

 private:
  const RouteInstance* inst_;
  const TimeGrid* grid_;
  const PowerModels* power_;
};

}  // namespace coldchain
