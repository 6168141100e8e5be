#pragma once

// Forward-Euler cargo-hold thermodynamics: one well-mixed air node exchanging
// heat with the ambient (wall conduction, plus infiltration while doors are
// open), with each pallet, and with the refrigeration unit's cooling fluid.
// The same linear update rules are replicated as equality constraints in the
// LP layer, so simulated trajectories and LP solutions agree to rounding.

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "coldchain/instance.hpp"
#include "coldchain/scenario_path.hpp"

namespace coldchain {

// Air<->ambient exchange coefficient (W/K) for a phase: wall conduction only
// while driving; open-door area plus infiltration while handling.
double alpha(const ThermoParams& t, Phase phase);

// One air-temperature step:
//   T' = T + dt/C * (a*(T_ext-T) + sum_p beta_p*(T_p-T) + g*(T_cu-T))
// pallet_betas/pallet_temps run over the pallets currently on board; pass
// g = 0 (or T_cu = T) while the unit is off.
double step_air(double T_air_K, double T_ext_K, double T_cu_K, double alpha_W_per_K,
                double gamma_W_per_K, const std::vector<double>& pallet_betas,
                const std::vector<double>& pallet_temps_K, double air_heat_capacity_J_per_K,
                double dt_s);

// One pallet-temperature step: T' = T + dt*beta/C_p * (T_air - T).
double step_product(double T_p_K, double T_air_K, double beta_W_per_K,
                    double heat_capacity_J_per_K, double dt_s);

// Band violation of one product temperature, in K (0 inside the band).
double violation(double T_p_K, const ProductClass& cls);

struct ThermalState {
  double air_K = 0;
  // Indexed by pallet id; NaN while the pallet is not on board.
  std::vector<double> pallet_K;
};

struct ControlDecision {
  double T_cu_K = 0;   // cooling-fluid temperature; T_cu == T_air means idle
  double W_watts = 0;  // electrical power drawn, used for fuel accounting
};

// Called once per driving interval; handling intervals always run with the
// unit off.
using ControlPolicy = std::function<ControlDecision(int interval, const ThermalState&)>;

struct TrajectoryResult {
  // Per time point (total_points entries).
  std::vector<double> time_s;
  std::vector<double> air_K;
  std::vector<std::vector<double>> pallet_K;  // [point][pallet id], NaN off board
  // Per interval (total_intervals entries); T_cu is NaN for handling slots.
  std::vector<double> tcu_K;
  std::vector<double> w_W;
  std::vector<double> dt_s;
  // Violation-weighted time, in K*s, and fuel burned, in litres.
  double cost_K_s = 0;
  double fuel_L = 0;
};

// Runs one tour under the given realization and control policy. The scenario
// must provide door times for stages 2..S and loaded-pallet temperatures
// matching loaded_at_stage(s). Cost counts each interval's starting violation
// weighted by the interval length, over pallets on board in that interval.
TrajectoryResult simulate_trajectory(const RouteInstance& inst, const TimeGrid& grid,
                                     const ScenarioPath& path, const ControlPolicy& policy);

// Deterministic CSV dump of a trajectory (one row per time point; control
// columns describe the interval starting at the row's point, empty on the
// terminal row).
std::string trajectory_to_csv(const RouteInstance& inst, const TimeGrid& grid,
                              const TrajectoryResult& traj);

constexpr double kOffBoard = std::numeric_limits<double>::quiet_NaN();

}  // namespace coldchain
