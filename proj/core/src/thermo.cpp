#include "coldchain/thermo.hpp"

#include <cmath>
#include <stdexcept>

#include "coldchain/csv.hpp"

namespace coldchain {

double alpha(const ThermoParams& t, Phase phase) {
  if (phase == Phase::Driving) return t.wall_U_W_per_m2K * t.wall_area_closed_m2;
  return t.wall_U_W_per_m2K * t.wall_area_open_m2 +
         t.infiltration_kg_per_s * t.air_specific_heat_J_per_kgK;
}

double step_air(double T_air_K, double T_ext_K, double T_cu_K, double alpha_W_per_K,
                double gamma_W_per_K, const std::vector<double>& pallet_betas,
                const std::vector<double>& pallet_temps_K, double air_heat_capacity_J_per_K,
                double dt_s) {
  double flow = alpha_W_per_K * (T_ext_K - T_air_K);
  for (size_t p = 0; p < pallet_betas.size(); ++p)
    flow += pallet_betas[p] * (pallet_temps_K[p] - T_air_K);
  flow += gamma_W_per_K * (T_cu_K - T_air_K);
  return T_air_K + dt_s / air_heat_capacity_J_per_K * flow;
}

double step_product(double T_p_K, double T_air_K, double beta_W_per_K,
                    double heat_capacity_J_per_K, double dt_s) {
  return T_p_K + dt_s * beta_W_per_K / heat_capacity_J_per_K * (T_air_K - T_p_K);
}

double violation(double T_p_K, const ProductClass& cls) {
  return std::max(T_p_K - cls.temp_max_K, 0.0) + std::max(cls.temp_min_K - T_p_K, 0.0);
}

TrajectoryResult simulate_trajectory(const RouteInstance& inst, const TimeGrid& grid,
                                     const ScenarioPath& path, const ControlPolicy& policy) {
  const int S = inst.n_stages();
  if (path.n_stages() != S)
    throw std::invalid_argument("simulate_trajectory: scenario stage count mismatch");
  const size_t P = inst.pallets.size();
  const double C = inst.thermo.air_heat_capacity_J_per_K;
  const double gamma = inst.thermo.evaporator_coupling_W_per_K;
  const double a_drive = alpha(inst.thermo, Phase::Driving);
  const double a_handle = alpha(inst.thermo, Phase::Handling);

  TrajectoryResult out;
  out.time_s.reserve(static_cast<size_t>(grid.total_points()));
  out.air_K.reserve(static_cast<size_t>(grid.total_points()));
  out.pallet_K.reserve(static_cast<size_t>(grid.total_points()));

  ThermalState state;
  state.air_K = inst.initial_air_temp_K;
  state.pallet_K.assign(P, kOffBoard);

  double clock_s = 0;
  double cost = 0, fuel = 0;

  // Pallets leaving at stop s-1 are still aboard at the arrival point; they are
  // marked off-board right after that point is recorded, before any stage-s interval.
  int pending_removal_stage = 0;
  auto record_point = [&]() {
    out.time_s.push_back(clock_s);
    out.air_K.push_back(state.air_K);
    out.pallet_K.push_back(state.pallet_K);
    if (pending_removal_stage != 0) {
      for (const Pallet& p : inst.pallets)
        if (p.destination_stop == pending_removal_stage - 1)
          state.pallet_K[static_cast<size_t>(p.id)] = kOffBoard;
      pending_removal_stage = 0;
    }
  };

  auto board_pallets = [&](int s) {
    const std::vector<int> in = inst.loaded_at_stage(s);
    const std::vector<double>& temps = path.loaded_temps_K.at(static_cast<size_t>(s - 1));
    if (temps.size() != in.size())
      throw std::invalid_argument("simulate_trajectory: loaded_temps_K size mismatch at stage " +
                                  std::to_string(s));
    for (size_t k = 0; k < in.size(); ++k)
      state.pallet_K[static_cast<size_t>(in[k])] = temps[k];
  };

  auto step_interval = [&](int interval, const std::vector<int>& cargo, double dt, double a,
                           double g, double tcu, double w, double record_tcu) {
    // Cost accrues on the interval's starting violations.
    double viol = 0;
    for (int id : cargo) viol += violation(state.pallet_K[static_cast<size_t>(id)], inst.pallet_class(id));
    cost += dt * viol;
    fuel += w * dt / inst.thermo.fuel_energy_J_per_L;

    std::vector<double> betas(cargo.size()), temps(cargo.size());
    for (size_t k = 0; k < cargo.size(); ++k) {
      betas[k] = inst.pallet_class(cargo[k]).beta();
      temps[k] = state.pallet_K[static_cast<size_t>(cargo[k])];
    }
    const double air_next = step_air(state.air_K, grid.ext_temp_K(interval), tcu, a, g, betas, temps, C, dt);
    for (int id : cargo) {
      const ProductClass& cls = inst.pallet_class(id);
      state.pallet_K[static_cast<size_t>(id)] = step_product(
          state.pallet_K[static_cast<size_t>(id)], state.air_K, cls.beta(), cls.heat_capacity_J_per_K, dt);
    }
    state.air_K = air_next;

    out.tcu_K.push_back(record_tcu);
    out.w_W.push_back(w);
    out.dt_s.push_back(dt);
    clock_s += dt;
  };

  int interval = 0;
  for (int s = 1; s <= S; ++s) {
    if (s == 1) {
      board_pallets(1);  // depot load; no handling phase is modeled for it
      if (path.door_open_s[0] != 0)
        throw std::invalid_argument("simulate_trajectory: stage 1 cannot have a door-open time");
    } else {
      pending_removal_stage = s;
      const std::vector<int> cargo = inst.cargo_handling(s);
      const std::vector<double> dts =
          handling_slot_durations(grid, s, path.door_open_s[static_cast<size_t>(s - 1)]);
      for (double dt : dts) {
        record_point();
        // Doors open: unit off, exchange through the opening dominates.
        step_interval(interval++, cargo, dt, a_handle, 0.0, state.air_K, 0.0, kOffBoard);
      }
      board_pallets(s);
    }
    const std::vector<int> cargo = inst.cargo_driving(s);
    for (int k = 0; k < grid.driving_slots(s); ++k) {
      record_point();
      const ControlDecision d = policy(interval, state);
      step_interval(interval++, cargo, grid.delta_drive_s(), a_drive, gamma, d.T_cu_K, d.W_watts,
                    d.T_cu_K);
    }
  }
  record_point();  // terminal point: arrival at the last stop

  out.cost_K_s = cost;
  out.fuel_L = fuel;
  return out;
}

std::string trajectory_to_csv(const RouteInstance& inst, const TimeGrid& grid,
                              const TrajectoryResult& traj) {
  std::vector<std::string> header = {"time_s", "stage", "phase", "T_air_K"};
  for (const Pallet& p : inst.pallets) header.push_back("T_p" + std::to_string(p.id) + "_K");
  header.insert(header.end(), {"T_cu_K", "W_watts", "violation_K"});
  csv::Writer w(header);

  const int n = grid.total_points();
  for (int i = 0; i < n; ++i) {
    std::vector<std::string> row;
    row.push_back(csv::format_double(traj.time_s[static_cast<size_t>(i)]));
    const bool terminal = i == n - 1;
    const int stage = terminal ? grid.n_stages() : grid.stage_of_interval(i);
    row.push_back(std::to_string(stage));
    row.push_back(terminal ? "end"
                           : (grid.phase_of_interval(i) == Phase::Handling ? "handling" : "driving"));
    row.push_back(csv::format_double(traj.air_K[static_cast<size_t>(i)]));
    double viol = 0;
    for (const Pallet& p : inst.pallets) {
      const double t = traj.pallet_K[static_cast<size_t>(i)][static_cast<size_t>(p.id)];
      row.push_back(std::isnan(t) ? "" : csv::format_double(t));
      if (!std::isnan(t)) viol += violation(t, inst.pallet_class(p.id));
    }
    if (terminal || std::isnan(traj.tcu_K[static_cast<size_t>(i)])) {
      row.push_back("");
      row.push_back(terminal ? "" : csv::format_double(traj.w_W[static_cast<size_t>(i)]));
    } else {
      row.push_back(csv::format_double(traj.tcu_K[static_cast<size_t>(i)]));
      row.push_back(csv::format_double(traj.w_W[static_cast<size_t>(i)]));
    }
    row.push_back(csv::format_double(viol));
    w.add_row(row);
  }
  return w.str();
}

}  // namespace coldchain
