#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "coldchain/sddp.hpp"
#include "coldchain/thermo.hpp"
#include "doctest.h"
#include "toys.hpp"

using namespace coldchain;

namespace {

struct Fixture {
  RouteInstance inst = toys::two_stop(275.2);  // tight band keeps costs positive
  TimeGrid grid{inst, {0, 1}};
  PowerModels pm = toys::toy_power(inst);
  StageLpBuilder bld{&inst, &grid, &pm};
  ScenarioLattice lat = toys::toy_lattice();
  StageXi root = toys::toy_lattice().stages[0].nodes[0].xi;
};

}  // namespace

TEST_CASE("lower bound climbs monotonically to the extensive optimum") {
  Fixture f;
  double opt = toys::extensive_opt(f.bld, f.inst, f.lat.stages[1].nodes, f.root);
  CHECK(opt == doctest::Approx(3.723181423).epsilon(1e-6));  // frozen baseline

  TrainOptions topt;
  topt.iterations = 60;
  topt.seed = 7;
  TrainResult res = train(f.inst, f.grid, f.pm, f.lat, topt);
  const TrainReport& rep = res.report;
  REQUIRE(rep.iterations_run == 60);
  for (size_t i = 1; i < rep.lower_bound_K_min.size(); ++i)
    CHECK(rep.lower_bound_K_min[i] >= rep.lower_bound_K_min[i - 1] - 1e-9);
  double lb = rep.lower_bound_K_min.back();
  CHECK(lb == doctest::Approx(opt).epsilon(1e-6));
  CHECK(lb <= opt + 1e-7);
  CHECK(res.value.at(1).size() == 60);
  CHECK(res.value.at(2).empty());
  CHECK(res.value.at(1)[0].gradient.size() == 3);

  SUBCASE("every cut underestimates the expected recourse") {
    StageLpOptions full;
    std::vector<lp::Solver> node_solvers;
    std::vector<StageLp> node_lps;
    for (const LatticeNode& nd : f.lat.stages[1].nodes) {
      node_lps.push_back(f.bld.build(2, nd.xi, {}, full));
      node_solvers.emplace_back(lp::Model(node_lps.back().model));
      node_solvers.back().suggest_basis(node_lps.back().crash_basis);
    }
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> ua(273.0, 279.0), ut(273.0, 278.0);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> xhat = {ua(rng), ut(rng), ut(rng)};
      double expected = 0;
      for (size_t m = 0; m < node_lps.size(); ++m) {
        std::vector<double> rhs = StageLpBuilder::state_rhs(node_lps[m], xhat[0], {xhat[1], xhat[2]});
        for (size_t i = 0; i < rhs.size(); ++i)
          node_solvers[m].set_rhs(node_lps[m].state_rows[i], rhs[i]);
        const lp::Solution& r = node_solvers[m].solve();
        REQUIRE(r.status == lp::Status::Optimal);
        expected += f.lat.stages[1].nodes[m].prob * r.objective;
      }
      double vhat = 0;  // theta's floor
      for (const Cut& cut : res.value.at(1)) {
        double v = cut.intercept;
        for (size_t k = 0; k < cut.gradient.size(); ++k) v += cut.gradient[k] * xhat[k];
        vhat = std::max(vhat, v);
      }
      CHECK(vhat <= expected + 1e-5);
    }
  }

  SUBCASE("decide-time replay of the trained policy hits the optimum") {
    StageDecider dec(&f.bld, StageLpOptions{});
    StageDecision d1 = dec.decide(1, {f.inst.initial_air_temp_K, 275.5, 275.5}, res.value.at(1));
    const ThermoParams& th = f.inst.thermo;
    const double a_open = alpha(th, Phase::Handling);
    const double beta = f.inst.pallet_class(1).beta();
    const double cp = f.inst.pallet_class(1).heat_capacity_J_per_K;
    const double text = f.inst.handling_ext_temp_K(2);
    double total = d1.immediate_K_min;
    for (const LatticeNode& nd : f.lat.stages[1].nodes) {
      double air = d1.end_state[0], t1 = d1.end_state[2];  // pallet 0 leaves
      double dt = nd.xi.door_open_s;
      double hand_cost = violation(t1, f.inst.pallet_class(1)) * dt / 60.0;
      double air2 = air + dt / th.air_heat_capacity_J_per_K *
                              (a_open * (text - air) + beta * (t1 - air));
      double t1b = t1 + dt * beta / cp * (air - t1);
      StageDecision d2 = dec.decide(2, {air2, t1b, nd.xi.loaded_temps_K[0]}, res.value.at(2));
      total += nd.prob * (hand_cost + d2.immediate_K_min);
    }
    CHECK(total == doctest::Approx(opt).epsilon(1e-5));
  }

  SUBCASE("value function serialization is exact and the report csv is shaped") {
    std::string js = value_function_to_json(res.value);
    ValueFunction vf2 = value_function_from_json(js);
    REQUIRE(vf2.n_stages == 2);
    REQUIRE(vf2.cuts[1].size() == 60);
    for (size_t k = 0; k < vf2.cuts[1].size(); ++k) {
      const Cut& p = res.value.cuts[1][k];
      const Cut& q = vf2.cuts[1][k];
      CHECK(p.intercept == q.intercept);
      CHECK(p.gradient == q.gradient);
      CHECK(p.iteration == q.iteration);
      CHECK(q.stage == 1);
    }
    std::string csv = train_report_to_csv(rep);
    CHECK(csv.rfind("iteration,lower_bound_K_min,forward_cost_K_min\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 61);
  }
}

TEST_CASE("single-scenario lattice stops early at the deterministic optimum") {
  Fixture f;
  ScenarioLattice dlat = f.lat;
  dlat.stages[1].nodes = {f.lat.stages[1].nodes[0]};
  dlat.stages[1].nodes[0].prob = 1.0;
  TrainOptions dopt;
  dopt.iterations = 50;
  dopt.deterministic_gap = 1e-9;
  TrainResult dr = train(f.inst, f.grid, f.pm, dlat, dopt);
  double dext = toys::extensive_opt(f.bld, f.inst, dlat.stages[1].nodes, f.root);
  CHECK(dr.report.iterations_run < 50);
  CHECK(dr.report.lower_bound_K_min.back() == doctest::Approx(dext).epsilon(1e-7));
  CHECK(dext == doctest::Approx(5.245328396).epsilon(1e-6));  // frozen baseline
  REQUIRE(dr.report.last_tcu_K.size() == 2);
  CHECK(dr.report.last_tcu_K[0].size() == 2);
}

TEST_CASE("fuel budgets: slack leaves the optimum alone, tight binds it") {
  Fixture f;
  double opt = toys::extensive_opt(f.bld, f.inst, f.lat.stages[1].nodes, f.root);

  TrainOptions bo;
  bo.iterations = 60;
  bo.with_fuel = true;
  bo.fuel_budget_L = 1e6;
  TrainResult br = train(f.inst, f.grid, f.pm, f.lat, bo);
  CHECK(br.report.lower_bound_K_min.back() == doctest::Approx(opt).epsilon(1e-6));
  CHECK(br.value.at(1)[0].gradient.size() == 4);  // fuel joins the state

  TrainOptions t0;
  t0.iterations = 80;
  t0.with_fuel = true;
  t0.fuel_budget_L = 0;
  TrainResult zr = train(f.inst, f.grid, f.pm, f.lat, t0);
  double zopt = toys::extensive_opt(f.bld, f.inst, f.lat.stages[1].nodes, f.root, true, 0.0);
  CHECK(zopt == doctest::Approx(4.445304783).epsilon(1e-6));  // frozen baseline
  CHECK(zr.report.lower_bound_K_min.back() == doctest::Approx(zopt).epsilon(1e-6));
  CHECK(zopt > opt);  // an empty tank must cost comfort
  for (size_t i = 1; i < zr.report.lower_bound_K_min.size(); ++i)
    CHECK(zr.report.lower_bound_K_min[i] >= zr.report.lower_bound_K_min[i - 1] - 1e-9);
}
