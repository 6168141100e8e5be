#include <cmath>
#include <string>
#include <vector>

#include "coldchain/policies.hpp"
#include "doctest.h"
#include "toys.hpp"

using namespace coldchain;

namespace {

struct Fixture {
  RouteInstance inst = toys::two_stop(275.2);
  TimeGrid grid{inst, {0, 1}};
  PowerModels pm = toys::toy_power(inst);
  StageLpBuilder bld{&inst, &grid, &pm};
  ScenarioLattice lat = toys::toy_lattice();
};

ScenarioPath node_path(double door_s, double temp) {
  ScenarioPath p;
  p.door_open_s = {0.0, door_s};
  p.loaded_temps_K = {{275.5, 275.5}, {temp}};
  return p;
}

}  // namespace

TEST_CASE("air-only hysteresis switches on the blended threshold") {
  RouteInstance inst = toys::two_stop(275.2);
  std::vector<int> cargo = {1, 2};
  CHECK(h1_state(274.7, inst, cargo, false, 0.5));
  CHECK(!h1_state(274.5, inst, cargo, false, 0.5));
  CHECK(h1_state(274.5, inst, cargo, true, 0.5));   // holds while above floor
  CHECK(!h1_state(273.9, inst, cargo, true, 0.5));  // releases below floor
  CHECK(!h1_state(280.0, inst, {}, true, 0.5));     // empty cargo never cools
}

TEST_CASE("product-aware hysteresis vetoes on floors and fires on pull-down") {
  RouteInstance inst = toys::two_stop(275.2);
  std::vector<int> cargo = {1, 2};
  HeuristicParams hp;
  ThermalState st;
  st.pallet_K = {0, 0, 0};
  auto set = [&](double air, double t1, double t2) {
    st.air_K = air;
    st.pallet_K[1] = t1;
    st.pallet_K[2] = t2;
  };
  set(274.0, 275.3, 274.5);
  CHECK(h2_state(st, inst, cargo, false, hp));  // product trigger
  set(274.0, 274.5, 274.5);
  CHECK(!h2_state(st, inst, cargo, false, hp));
  set(274.7, 274.5, 274.5);
  CHECK(h2_state(st, inst, cargo, false, hp));  // air trigger
  set(280.0, 273.9, 275.3);
  CHECK(!h2_state(st, inst, cargo, true, hp));  // floor veto wins
  set(274.1, 274.5, 274.5);
  CHECK(h2_state(st, inst, cargo, true, hp));
  set(273.9, 274.5, 274.5);
  CHECK(!h2_state(st, inst, cargo, true, hp));
  HeuristicParams tight;
  tight.lambda2 = 0.5;
  set(274.0, 274.7, 274.5);
  CHECK(h2_state(st, inst, cargo, false, tight));  // smaller lambda2 fires earlier
}

TEST_CASE("capacity inversion realizes the cap exactly") {
  Fixture f;
  const MaxAffineModel& planes = f.pm.for_ext(291.0);
  const double air = 275.5;
  const double floor = f.inst.thermo.fluid_floor_K;
  const double full = planes.eval(floor, air);
  REQUIRE(full > 0);
  const double cap = 0.6 * full;
  double t = tcu_for_power(planes, air, cap, floor);
  CHECK(t > floor);
  CHECK(t < air);
  CHECK(planes.eval(t, air) == doctest::Approx(cap).epsilon(1e-6));
  CHECK(tcu_for_power(planes, air, 2 * full, floor) == floor);
  CHECK(playback_power_W(planes, air, air) == 0.0);
  CHECK(playback_power_W(planes, floor, air) == doctest::Approx(full).epsilon(1e-12));
}

TEST_CASE("trained policy playback averages to the training bound") {
  Fixture f;
  TrainOptions topt;
  topt.iterations = 60;
  topt.seed = 7;
  TrainResult res = train(f.inst, f.grid, f.pm, f.lat, topt);
  double opt = res.report.lower_bound_K_min.back();

  SpPolicy sp(&f.bld, &res.value);
  ScenarioPath pa = node_path(30.0, 276.8);
  ScenarioPath pb = node_path(45.0, 275.2);
  ScenarioPath pc = node_path(58.0, 274.3);
  TrajectoryResult traj_b;
  ScenarioMetrics sa = sp.run(pa);
  ScenarioMetrics sb = sp.run(pb, &traj_b);
  ScenarioMetrics sc = sp.run(pc);
  double expected = 0.5 * sa.cost_K_min + 0.3 * sb.cost_K_min + 0.2 * sc.cost_K_min;
  CHECK(expected == doctest::Approx(opt).epsilon(1e-5));
  CHECK(traj_b.w_W[2] == 0.0);  // handling slot forced off
  CHECK(sb.avg_power_W > 0);
  CHECK(sb.on_fraction > 0);
  CHECK(sb.on_fraction <= 1);

  SUBCASE("fuel-tracking run with slack budget reproduces the base cost") {
    TrainOptions ft = topt;
    ft.with_fuel = true;
    ft.fuel_budget_L = 1e6;
    TrainResult fres = train(f.inst, f.grid, f.pm, f.lat, ft);
    DecidePolicyOptions dopt;
    dopt.with_fuel = true;
    dopt.fuel_budget_L = 1e6;
    SpPolicy spf(&f.bld, &fres.value, dopt);
    ScenarioMetrics fb = spf.run(pb);
    CHECK(fb.cost_K_min == doctest::Approx(sb.cost_K_min).epsilon(1e-5));
    CHECK(fb.max_mu_L == 0.0);
    // Comfort-equal plans may differ in the fluid schedule (power is not
    // priced), so only the cost is pinned; fuel just has to be tracked.
    CHECK(fb.fuel_L > 0);
  }

  SUBCASE("perfect foresight is the pointwise floor and plays back its bound") {
    for (const ScenarioPath* p : {&pa, &pb, &pc}) {
      double bound = 0;
      ScenarioMetrics cm = clv_metrics(f.inst, f.grid, f.pm, *p, {}, nullptr, &bound);
      CHECK(cm.cost_K_min == doctest::Approx(bound).epsilon(1e-5));
      HeuristicParams hp;
      ScenarioMetrics m1 = run_heuristic(f.inst, f.grid, f.pm, *p, hp, false);
      ScenarioMetrics m2 = run_heuristic(f.inst, f.grid, f.pm, *p, hp, true);
      ScenarioMetrics ms = sp.run(*p);
      CHECK(cm.cost_K_min <= m1.cost_K_min + 1e-6);
      CHECK(cm.cost_K_min <= m2.cost_K_min + 1e-6);
      CHECK(cm.cost_K_min <= ms.cost_K_min + 1e-6);
    }
  }

  SUBCASE("all five policies evaluate deterministically on a common sample") {
    DoorTimeModel dm;
    dm.intercept = std::log(40.0);
    dm.residual_pool = {-0.05, 0.0, 0.05};
    ScenarioModel model(&f.inst, dm);
    EvaluateOptions eo;
    eo.n_scenarios = 4;
    eo.seed = 3;
    std::vector<PolicyResult> r1 =
        evaluate(f.inst, f.grid, f.pm, model, {"h1", "h2", "rlp", "sp", "clv"}, &res.value, eo);
    std::vector<PolicyResult> r2 =
        evaluate(f.inst, f.grid, f.pm, model, {"h1", "h2", "rlp", "sp", "clv"}, &res.value, eo);
    CHECK(results_to_csv(r1) == results_to_csv(r2));
    REQUIRE(r1.size() == 5);
    CHECK(r1[4].policy == "clv");
    for (size_t s = 0; s < 4; ++s) {
      double floor = r1[4].per_scenario[s].cost_K_min;
      for (size_t p = 0; p < 4; ++p) CHECK(floor <= r1[p].per_scenario[s].cost_K_min + 1e-6);
    }
    std::string sum = summary_to_csv(r1);
    CHECK(sum.find("policy,n,mean_cost_K_min") == 0);
    std::vector<PolicySummary> sums;
    for (const auto& pr : r1) sums.push_back(summarize(pr));
    CHECK(sums[0].n == 4);
    CHECK(sums[0].se_cost_K_min >= 0);
  }
}

TEST_CASE("heuristics engage from the warm start and sit out handling") {
  Fixture f;
  ScenarioPath pb = node_path(45.0, 275.2);
  TrajectoryResult tr;
  HeuristicParams hp;
  ScenarioMetrics h1 = run_heuristic(f.inst, f.grid, f.pm, pb, hp, false, &tr);
  CHECK(tr.w_W[0] > 1.0);
  CHECK(tr.w_W[2] == 0.0);
  ScenarioMetrics chk = metrics_from_trajectory(tr);
  CHECK(chk.cost_K_min == h1.cost_K_min);
  CHECK(chk.fuel_L == h1.fuel_L);
  ScenarioMetrics h2 = run_heuristic(f.inst, f.grid, f.pm, pb, hp, true);
  CHECK(h2.on_fraction >= 0);
  CHECK(h2.on_fraction <= 1);
}

TEST_CASE("with randomness switched off, lookahead and foresight coincide") {
  Fixture f;
  TimeGrid grid2(f.inst, {0, 30});
  StageLpBuilder bld2(&f.inst, &grid2, &f.pm);
  DoorTimeModel dm;
  dm.intercept = std::log(1800.0);
  ScenarioModel model(&f.inst, dm);
  model.fix_temps = true;
  model.fix_door_times = true;
  std::vector<ScenarioPath> paths = model.sample_paths(2, 11);
  REQUIRE(paths[0].door_open_s[1] == paths[1].door_open_s[1]);
  REQUIRE(paths[0].loaded_temps_K[1][0] == paths[1].loaded_temps_K[1][0]);

  ScenarioLattice dl;
  dl.stages.resize(2);
  dl.stages[0].nodes = {{model.expected_stage(1), 1.0}};
  dl.stages[1].nodes = {{model.expected_stage(2), 1.0}};
  dl.max_door_open_s = {0, model.expected_stage(2).door_open_s};
  dl.handling_slots = {0, 30};
  dl.nodes_per_stage = 1;
  TrainOptions dt;
  dt.iterations = 100;
  dt.deterministic_gap = 1e-9;
  TrainResult dres = train(f.inst, grid2, f.pm, dl, dt);

  SpPolicy dsp(&bld2, &dres.value);
  RlpPolicy rlp(&bld2, &model);
  double bound = 0;
  ScenarioMetrics mc = clv_metrics(f.inst, grid2, f.pm, paths[0], {}, nullptr, &bound);
  ScenarioMetrics msp = dsp.run(paths[0]);
  ScenarioMetrics mr = rlp.run(paths[0]);
  CHECK(mc.cost_K_min > 0.1);  // half-hour door opening forces real cost
  CHECK(msp.cost_K_min == doctest::Approx(mc.cost_K_min).epsilon(1e-5));
  CHECK(mr.cost_K_min == doctest::Approx(mc.cost_K_min).epsilon(1e-5));
  CHECK(mc.cost_K_min == doctest::Approx(37.716227597).epsilon(1e-6));  // frozen baseline
}
