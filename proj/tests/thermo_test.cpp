#include <algorithm>
#include <cmath>
#include <vector>

#include "coldchain/thermo.hpp"
#include "doctest.h"
#include "toys.hpp"

using namespace coldchain;

namespace {

// Hand-rolled replay of a recorded trajectory from the raw update equations,
// independent of the simulator's internal bookkeeping.
struct Replay {
  std::vector<double> air;
  std::vector<std::vector<double>> pallets;
  double cost_K_s = 0;
  double fuel_L = 0;
};

Replay replay(const RouteInstance& inst, const TimeGrid& grid, const ScenarioPath& path,
              const TrajectoryResult& tr) {
  Replay out;
  const ThermoParams& th = inst.thermo;
  size_t npal = inst.pallets.size();
  double air = inst.initial_air_temp_K;
  std::vector<double> temps(npal, kOffBoard);
  // Depot load happens before the first interval.
  {
    const std::vector<int>& ids = inst.loaded_at_stage(1);
    for (size_t k = 0; k < ids.size(); ++k)
      temps[static_cast<size_t>(ids[k])] = path.loaded_temps_K[0][k];
  }
  out.air.push_back(air);
  out.pallets.push_back(temps);
  for (int i = 0; i < grid.total_intervals(); ++i) {
    int s = grid.stage_of_interval(i);
    Phase ph = grid.phase_of_interval(i);
    std::vector<int> cargo = cargo_at(inst, grid, i);
    // Whoever dropped out of the cargo set left the truck.
    for (size_t id = 0; id < npal; ++id)
      if (!std::isnan(temps[id]) &&
          std::find(cargo.begin(), cargo.end(), static_cast<int>(id)) == cargo.end())
        temps[id] = kOffBoard;
    if (s >= 2 && i == grid.driving_begin(s)) {
      // Doors just closed: arrivals appear at their realized temperatures.
      const std::vector<int>& in = inst.loaded_at_stage(s);
      for (size_t k = 0; k < in.size(); ++k)
        temps[static_cast<size_t>(in[k])] =
            path.loaded_temps_K[static_cast<size_t>(s - 1)][k];
    }
    double dt = tr.dt_s[static_cast<size_t>(i)];
    for (int id : cargo)
      out.cost_K_s += violation(temps[static_cast<size_t>(id)], inst.pallet_class(id)) * dt;
    double a = alpha(th, ph);
    double text = grid.ext_temp_K(i);
    double flux = a * (text - air);
    for (int id : cargo) flux += inst.pallet_class(id).beta() * (temps[static_cast<size_t>(id)] - air);
    if (ph == Phase::Driving) {
      double tcu = tr.tcu_K[static_cast<size_t>(i)];
      flux += th.gamma_W_per_K * (tcu - air);
      out.fuel_L += tr.w_W[static_cast<size_t>(i)] * dt / th.fuel_energy_J_per_L;
    }
    double air_next = air + dt / th.air_heat_capacity_J_per_K * flux;
    for (int id : cargo) {
      const ProductClass& c = inst.pallet_class(id);
      double& T = temps[static_cast<size_t>(id)];
      T = T + dt * c.beta() / c.heat_capacity_J_per_K * (air - T);
    }
    air = air_next;
    out.air.push_back(air);
    out.pallets.push_back(temps);
  }
  return out;
}

ScenarioPath toy_path() {
  ScenarioPath p;
  p.door_open_s = {0, 40.0};
  p.loaded_temps_K = {{275.5, 276.1}, {276.4}};
  return p;
}

ControlPolicy banged(const RouteInstance& inst, const TimeGrid& grid, const PowerModels& pm) {
  return [&inst, &grid, &pm](int interval, const ThermalState& st) {
    ControlDecision d;
    // Alternate hard cooling and idling so the oracle sees both regimes.
    if (interval % 2 == 0) {
      d.T_cu_K = inst.thermo.fluid_floor_K;
      d.W_watts = std::max(0.0, pm.for_ext(grid.ext_temp_K(interval)).eval(d.T_cu_K, st.air_K));
    } else {
      d.T_cu_K = st.air_K;
      d.W_watts = 0;
    }
    return d;
  };
}

}  // namespace

TEST_CASE("single step formulas match their closed forms") {
  // T' = T + dt/C * (a(Te-T) + b(Tp-T) + g(Tc-T))
  double next = step_air(275.0, 290.0, 265.0, 30.0, 300.0, {7.6}, {276.0}, 120513.0, 60.0);
  double flux = 30.0 * 15.0 + 7.6 * 1.0 + 300.0 * (-10.0);
  CHECK(next == doctest::Approx(275.0 + 60.0 / 120513.0 * flux).epsilon(1e-15));

  double p = step_product(276.0, 275.0, 7.6, 7.8e5, 60.0);
  CHECK(p == doctest::Approx(276.0 + 60.0 * 7.6 / 7.8e5 * (-1.0)).epsilon(1e-15));

  ProductClass c{"x", 4.0, 1.9, 7.8e5, 274.0, 277.0};
  CHECK(violation(275.0, c) == 0.0);
  CHECK(violation(273.0, c) == doctest::Approx(1.0));
  CHECK(violation(279.5, c) == doctest::Approx(2.5));
}

TEST_CASE("open doors exchange more heat than closed walls") {
  ThermoParams th;
  CHECK(alpha(th, Phase::Handling) > alpha(th, Phase::Driving));
  CHECK(alpha(th, Phase::Driving) > 0);
}

TEST_CASE("equilibrium is a fixed point") {
  RouteInstance inst = toys::two_stop();
  double T = 280.0;
  double air = T;
  for (int k = 0; k < 1000; ++k)
    air = step_air(air, T, T, alpha(inst.thermo, Phase::Driving), inst.thermo.gamma_W_per_K,
                   {7.6, 7.6}, {T, T}, inst.thermo.air_heat_capacity_J_per_K, 60.0);
  CHECK(air == doctest::Approx(T).epsilon(1e-15));
}

TEST_CASE("updates are affine in the thermal state") {
  // With controls and ambient fixed, state propagation is affine, so a convex
  // combination of start states propagates to the same combination of results.
  auto prop = [](double air, double t1, double t2) {
    for (int k = 0; k < 50; ++k) {
      double next = step_air(air, 291.0, 265.0, 30.0, 300.0, {7.6, 5.0}, {t1, t2}, 120513.0, 60.0);
      t1 = step_product(t1, air, 7.6, 7.8e5, 60.0);
      t2 = step_product(t2, air, 5.0, 2.0e5, 60.0);
      air = next;
    }
    return std::vector<double>{air, t1, t2};
  };
  std::vector<double> a = prop(275.0, 276.0, 274.5);
  std::vector<double> b = prop(277.5, 274.2, 276.8);
  double lam = 0.3;
  std::vector<double> mix = prop(lam * 275.0 + (1 - lam) * 277.5, lam * 276.0 + (1 - lam) * 274.2,
                                 lam * 274.5 + (1 - lam) * 276.8);
  for (size_t i = 0; i < 3; ++i)
    CHECK(mix[i] == doctest::Approx(lam * a[i] + (1 - lam) * b[i]).epsilon(1e-12));
}

TEST_CASE("trajectory matches an independent replay to rounding") {
  RouteInstance inst = toys::two_stop();
  TimeGrid grid(inst, {0, 2});
  PowerModels pm = toys::toy_power(inst);
  ScenarioPath path = toy_path();
  TrajectoryResult tr = simulate_trajectory(inst, grid, path, banged(inst, grid, pm));

  CHECK(static_cast<int>(tr.air_K.size()) == grid.total_points());
  CHECK(static_cast<int>(tr.tcu_K.size()) == grid.total_intervals());
  Replay rp = replay(inst, grid, path, tr);
  for (size_t t = 0; t < tr.air_K.size(); ++t) {
    CHECK(tr.air_K[t] == doctest::Approx(rp.air[t]).epsilon(1e-12));
    for (size_t p = 0; p < inst.pallets.size(); ++p) {
      bool nan_sim = std::isnan(tr.pallet_K[t][p]);
      bool nan_rep = std::isnan(rp.pallets[t][p]);
      CHECK(nan_sim == nan_rep);
      if (!nan_sim) CHECK(tr.pallet_K[t][p] == doctest::Approx(rp.pallets[t][p]).epsilon(1e-12));
    }
  }
  CHECK(tr.cost_K_s == doctest::Approx(rp.cost_K_s).epsilon(1e-9));
  CHECK(tr.fuel_L == doctest::Approx(rp.fuel_L).epsilon(1e-9));
  // Handling intervals run with the unit off.
  for (int i = 0; i < grid.total_intervals(); ++i)
    if (grid.phase_of_interval(i) == Phase::Handling) {
      CHECK(std::isnan(tr.tcu_K[static_cast<size_t>(i)]));
      CHECK(tr.w_W[static_cast<size_t>(i)] == 0.0);
    }
}

TEST_CASE("per step energy balance closes") {
  RouteInstance inst = toys::two_stop();
  TimeGrid grid(inst, {0, 2});
  PowerModels pm = toys::toy_power(inst);
  TrajectoryResult tr = simulate_trajectory(inst, grid, toy_path(), banged(inst, grid, pm));
  const ThermoParams& th = inst.thermo;
  for (int i = 0; i < grid.total_intervals(); ++i) {
    double dt = tr.dt_s[static_cast<size_t>(i)];
    if (dt == 0) continue;
    double a = alpha(th, grid.phase_of_interval(i));
    double flux = a * (grid.ext_temp_K(i) - tr.air_K[static_cast<size_t>(i)]);
    for (int id : cargo_at(inst, grid, i))
      flux += inst.pallet_class(id).beta() *
              (tr.pallet_K[static_cast<size_t>(i)][static_cast<size_t>(id)] -
               tr.air_K[static_cast<size_t>(i)]);
    if (grid.phase_of_interval(i) == Phase::Driving)
      flux += th.gamma_W_per_K * (tr.tcu_K[static_cast<size_t>(i)] - tr.air_K[static_cast<size_t>(i)]);
    double lhs = th.air_heat_capacity_J_per_K *
                 (tr.air_K[static_cast<size_t>(i) + 1] - tr.air_K[static_cast<size_t>(i)]);
    double rhs = dt * flux;
    CHECK(std::abs(lhs - rhs) <= 1e-9 * std::max(1.0, std::abs(rhs)));
  }
}

TEST_CASE("trajectory csv is deterministic with one row per point") {
  RouteInstance inst = toys::two_stop();
  TimeGrid grid(inst, {0, 1});
  PowerModels pm = toys::toy_power(inst);
  TrajectoryResult tr = simulate_trajectory(inst, grid, toy_path(), banged(inst, grid, pm));
  std::string csv = trajectory_to_csv(inst, grid, tr);
  CHECK(csv == trajectory_to_csv(inst, grid, tr));
  CHECK(csv.rfind("time_s,", 0) == 0);
  size_t lines = 0;
  for (char ch : csv)
    if (ch == '\n') ++lines;
  CHECK(lines == static_cast<size_t>(grid.total_points()) + 1);
}
