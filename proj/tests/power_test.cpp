#include <cmath>
#include <random>
#include <vector>

#include "coldchain/power.hpp"
#include "doctest.h"
#include "toys.hpp"

using namespace coldchain;

TEST_CASE("theta coefficients follow the refrigerant pressure") {
  // Independent recomputation from the R134a correlation constants.
  const double a1 = -6.7014e3, b1 = 2.1729e5, a21 = -9.0496e2, a22 = 3.367e3, b2 = -3.152e3;
  const double gamma = 300.0, P = 5.7;
  double den = a1 * P + b1;
  ThetaCoeffs th = theta_from_pressure(gamma, P);
  CHECK(th.t1 == doctest::Approx(-gamma * a21 / den).epsilon(1e-12));
  CHECK(th.t2 == doctest::Approx(-gamma * (a22 * P + b2) / den).epsilon(1e-12));
  CHECK(th.t3 == -th.t1);
  CHECK(th.t4 == -th.t2);
  CHECK(th.t1 == doctest::Approx(1.515913).epsilon(1e-5));
  CHECK(th.t2 == doctest::Approx(-26.868701).epsilon(1e-5));
}

TEST_CASE("idle fluid draws no power at any temperature") {
  ThetaCoeffs th = theta_from_pressure(300.0, 5.7);
  for (double T : {263.15, 270.0, 283.15, 293.15})
    CHECK(exact_power(th, T, T) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("exact power worked values") {
  ThetaCoeffs th = theta_from_pressure(300.0, default_r134a_table().pressure_at(291.0));
  CHECK(exact_power(th, 263.15, 276.15) == doctest::Approx(546.362).epsilon(1e-4));
  CHECK(exact_power(th, 283.15, 293.15) == doctest::Approx(117.096).epsilon(1e-4));
  // Colder fluid means more compressor work at a fixed cabin temperature.
  double prev = exact_power(th, 276.0, 277.0);
  for (double tcu = 275.0; tcu >= 264.0; tcu -= 1.0) {
    double w = exact_power(th, tcu, 277.0);
    CHECK(w > prev);
    prev = w;
  }
}

TEST_CASE("saturation pressure interpolates the table monotonically") {
  SaturationTable tab = default_r134a_table();
  CHECK(tab.pressure_at(293.15) == doctest::Approx(5.7170).epsilon(1e-4));
  double prev = tab.pressure_at(265.0);
  for (double T = 266.0; T <= 305.0; T += 1.0) {
    double p = tab.pressure_at(T);
    CHECK(p > prev);
    prev = p;
  }
}

TEST_CASE("max affine surrogate is accurate, convex, and conservative") {
  SaturationTable tab = default_r134a_table();
  ThetaCoeffs th = theta_from_pressure(300.0, tab.pressure_at(291.0));
  FitGrid g;
  std::vector<double> xs, ys, ws;
  for (int a = 0; a < g.n_air; ++a) {
    double air = g.air_lo_K + (g.air_hi_K - g.air_lo_K) * a / (g.n_air - 1);
    for (int c = 0; c < g.n_tcu; ++c) {
      double tcu = g.fluid_floor_K + (air - g.fluid_floor_K) * c / (g.n_tcu - 1);
      xs.push_back(tcu);
      ys.push_back(air);
      ws.push_back(exact_power(th, tcu, air));
    }
  }
  FitOptions o;
  o.n_planes = 4;
  MaxAffineModel m = fit_max_affine(xs, ys, ws, o);
  CHECK(m.wmape == doctest::Approx(0.036755).epsilon(2e-3));
  CHECK(m.wmape < 0.05);

  // eval is the max over planes, hence convex in (tcu, air); spot-check with
  // random convex combinations.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> Utcu(g.fluid_floor_K, g.air_hi_K);
  std::uniform_real_distribution<double> Uair(g.air_lo_K, g.air_hi_K);
  std::uniform_real_distribution<double> Ulam(0.0, 1.0);
  for (int t = 0; t < 2000; ++t) {
    double x1 = Utcu(rng), y1 = Uair(rng), x2 = Utcu(rng), y2 = Uair(rng), lam = Ulam(rng);
    double lhs = m.eval(lam * x1 + (1 - lam) * x2, lam * y1 + (1 - lam) * y2);
    double rhs = lam * m.eval(x1, y1) + (1 - lam) * m.eval(x2, y2);
    CHECK(lhs <= rhs + 1e-9);
  }
  // A plane max never undershoots by construction only at the data points it
  // interpolates; globally it must stay close from below and above.
  MaxAffineModel m9 = fit_max_affine(xs, ys, ws, [] {
    FitOptions o9;
    o9.n_planes = 9;
    return o9;
  }());
  CHECK(m9.wmape <= m.wmape + 1e-12);
}

TEST_CASE("power inversion finds the warmest fluid meeting a target") {
  RouteInstance inst = toys::two_stop();
  PowerModels pm = toys::toy_power(inst);
  const MaxAffineModel& m = pm.for_ext(291.0);
  double floor = inst.thermo.fluid_floor_K;
  for (double air : {274.0, 276.5, 279.0}) {
    double cap = 0.45 * m.eval(floor, air);
    double t = tcu_for_power(m, air, cap, floor);
    CHECK(t >= floor);
    CHECK(t <= air);
    CHECK(m.eval(t, air) == doctest::Approx(cap).epsilon(1e-6));
    // Unreachable target pins at the floor.
    CHECK(tcu_for_power(m, air, 10.0 * m.eval(floor, air), floor) == floor);
    CHECK(w_max(m, floor, air, 1e9) == doctest::Approx(m.eval(floor, air)));
  }
}

TEST_CASE("route power models cover every ambient bucket and round trip") {
  RouteInstance inst = toys::two_stop();
  PowerModels pm = toys::toy_power(inst);
  CHECK(pm.by_bucket.size() >= 1);
  for (int i = 0; i < 4; ++i) CHECK_NOTHROW(pm.for_ext(291.0 + i * 0.3));
  const MaxAffineModel& m = pm.for_ext(291.4);
  CHECK(m.ext_bucket_K == pm.for_ext(291.0).ext_bucket_K);
  std::string js = power_models_to_json(pm);
  PowerModels back = power_models_from_json(js);
  CHECK(power_models_to_json(back) == js);
  CHECK(back.for_ext(291.0).eval(270.0, 276.0) ==
        doctest::Approx(pm.for_ext(291.0).eval(270.0, 276.0)).epsilon(1e-15));
}
