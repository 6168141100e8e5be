#include <cmath>
#include <vector>

#include "coldchain/stage_lp.hpp"
#include "coldchain/thermo.hpp"
#include "doctest.h"
#include "toys.hpp"

using namespace coldchain;

namespace {

struct Fixture {
  RouteInstance inst = toys::two_stop();
  TimeGrid grid{inst, {0, 1}};
  PowerModels pm = toys::toy_power(inst);
  StageLpBuilder bld{&inst, &grid, &pm};
};

lp::Solution solve_pinned(const StageLp& s, double air_K, const std::vector<double>& temps) {
  lp::Solver sol{lp::Model(s.model)};
  sol.suggest_basis(s.crash_basis);
  std::vector<double> rhs = StageLpBuilder::state_rhs(s, air_K, temps);
  for (size_t i = 0; i < rhs.size(); ++i) sol.set_rhs(s.state_rows[i], rhs[i]);
  lp::Solution r = sol.solve();
  REQUIRE(r.status == lp::Status::Optimal);
  return r;
}

}  // namespace

TEST_CASE("stage models have the hand-counted shape") {
  Fixture f;
  // Stage 2, one handling slot, two driving slots, three pallets in play.
  // Columns: air at 4 grid points; pallet 0 pinned only (1), pallet 1 across
  // the stage (4), pallet 2 loaded (3); tcu+W per driving slot (4); violation
  // epigraph per cargo slot (5). Rows: 3 pins, 1 load row, 3 air steps,
  // 5 pallet steps, 8 surrogate planes, 2 no-heating caps, 10 violation rows.
  StageXi xi2;
  xi2.door_open_s = 40.0;
  xi2.loaded_temps_K = {276.0};
  StageLp s2 = f.bld.build(2, xi2, {}, StageLpOptions{});
  CHECK(s2.model.n_cols() == 21);
  CHECK(s2.model.n_rows() == 32);
  CHECK(s2.theta_col == -1);  // terminal stage carries no tail value
  CHECK(s2.state_rows.size() == 3);
  CHECK(s2.state_pallet_ids == std::vector<int>({0, 1}));
  CHECK(s2.end_pallet_ids == std::vector<int>({1, 2}));

  StageXi xi1;
  xi1.loaded_temps_K = {275.5, 275.5};
  StageLp s1 = f.bld.build(1, xi1, {}, StageLpOptions{});
  CHECK(s1.state_rows.size() == 1);  // depot start pins air only
  CHECK(s1.xi_temp_rows.size() == 2);
  CHECK(s1.theta_col >= 0);
}

TEST_CASE("optimal plan replayed through the simulator lands on the LP state") {
  Fixture f;
  StageXi xi1;
  xi1.loaded_temps_K = {275.5, 275.5};
  StageLp s1 = f.bld.build(1, xi1, {}, StageLpOptions{});
  lp::Solution r1 = solve_pinned(s1, 275.5, {});

  ScenarioPath path;
  path.door_open_s = {0, 40.0};
  path.loaded_temps_K = {{275.5, 275.5}, {276.0}};
  std::vector<double> tcu(2);
  for (int d = 0; d < 2; ++d) tcu[static_cast<size_t>(d)] = r1.x[static_cast<size_t>(s1.tcu_cols[static_cast<size_t>(d)])];
  ControlPolicy pol = [&](int interval, const ThermalState& st) {
    ControlDecision c;
    if (interval >= 2) {
      c.T_cu_K = st.air_K;
      c.W_watts = 0;
      return c;
    }
    c.T_cu_K = tcu.at(static_cast<size_t>(interval));
    const MaxAffineModel& m = f.pm.for_ext(f.grid.ext_temp_K(interval));
    c.W_watts = std::max(0.0, m.eval(c.T_cu_K, st.air_K));
    return c;
  };
  TrajectoryResult tr = simulate_trajectory(f.inst, f.grid, path, pol);
  CHECK(r1.x[static_cast<size_t>(s1.end_state_cols[0])] == doctest::Approx(tr.air_K[2]).epsilon(1e-9));
  for (size_t k = 0; k < s1.end_pallet_ids.size(); ++k) {
    double sim_t = tr.pallet_K[2][static_cast<size_t>(s1.end_pallet_ids[k])];
    CHECK(r1.x[static_cast<size_t>(s1.end_state_cols[1 + k])] == doctest::Approx(sim_t).epsilon(1e-9));
  }
}

TEST_CASE("handling carries no decisions: full model equals stepped handoff") {
  Fixture f;
  StageXi xi2;
  xi2.door_open_s = 40.0;
  xi2.loaded_temps_K = {276.0};
  StageLp s2 = f.bld.build(2, xi2, {}, StageLpOptions{});
  const double in_air = 277.0;
  lp::Solution r2 = solve_pinned(s2, in_air, {276.2, 276.4});

  // Step the open-door slot by hand: unit off, only pallet 1 rides through.
  const double dt = 40.0;
  const ThermoParams& th = f.inst.thermo;
  const double beta1 = f.inst.pallet_class(1).beta();
  const double text = f.inst.handling_ext_temp_K(2);
  const double air1 = in_air + dt / th.air_heat_capacity_J_per_K *
                                   (alpha(th, Phase::Handling) * (text - in_air) +
                                    beta1 * (276.4 - in_air));
  const double t1 = 276.4 + dt * beta1 / f.inst.pallet_class(1).heat_capacity_J_per_K * (in_air - 276.4);

  StageLpOptions drv;
  drv.include_handling = false;
  StageXi none;
  StageLp s2d = f.bld.build(2, none, {}, drv);
  lp::Solution r2d = solve_pinned(s2d, air1, {t1, 276.0});
  CHECK(r2.objective == doctest::Approx(r2d.objective).epsilon(1e-7));
  for (int d = 0; d < 2; ++d)
    CHECK(r2.x[static_cast<size_t>(s2.tcu_cols[static_cast<size_t>(d)])] ==
          doctest::Approx(r2d.x[static_cast<size_t>(s2d.tcu_cols[static_cast<size_t>(d)])]).epsilon(1e-6));
}

TEST_CASE("tail cuts bound the objective and warm row adds match rebuilds") {
  Fixture f;
  StageXi xi1;
  xi1.loaded_temps_K = {275.5, 275.5};
  StageLp s1 = f.bld.build(1, xi1, {}, StageLpOptions{});
  lp::Solution base = solve_pinned(s1, 275.5, {});

  Cut c;
  c.stage = 1;
  c.intercept = 500.0;
  c.gradient.assign(s1.end_state_cols.size(), 0.0);
  StageLp s1c = f.bld.build(1, xi1, {c}, StageLpOptions{});
  lp::Solution r = solve_pinned(s1c, 275.5, {});
  CHECK(r.objective >= 500.0 - 1e-6);
  CHECK(r.objective <= 500.0 + base.objective + 1e-6);

  lp::Solver warm{lp::Model(s1.model)};
  warm.suggest_basis(s1.crash_basis);
  std::vector<double> rr = StageLpBuilder::state_rhs(s1, 275.5, {});
  for (size_t i = 0; i < rr.size(); ++i) warm.set_rhs(s1.state_rows[i], rr[i]);
  warm.solve();
  CutRow cr = f.bld.cut_row(s1, c);
  warm.add_row(cr.sense, cr.rhs, cr.entries);
  const lp::Solution& rw = warm.solve();
  REQUIRE(rw.status == lp::Status::Optimal);
  CHECK(rw.objective == doctest::Approx(r.objective).epsilon(1e-7));
}
