#include <cmath>
#include <stdexcept>

#include "coldchain/instance.hpp"
#include "doctest.h"
#include "toys.hpp"

using namespace coldchain;

TEST_CASE("product class heat ingress coefficient") {
  ProductClass c{"meat", 4.0, 1.9, 7.8e5, 274.0, 277.0};
  CHECK(c.beta() == doctest::Approx(7.6).epsilon(1e-12));
}

TEST_CASE("validation rejects inconsistent routes") {
  RouteInstance good = toys::two_stop();
  CHECK_NOTHROW(good.validate());

  RouteInstance bad = good;
  bad.classes[0].temp_min_K = 280.0;  // above temp_max
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = good;
  bad.pallets[2].destination_stop = 0;  // unloads before it is loaded
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = good;
  bad.stops[0].ext_temps_K.pop_back();  // one ambient reading per minute
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = good;
  bad.stops[1].pallets_out.clear();  // pallet 1 never leaves the truck
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = good;
  bad.pallets[0].class_index = 5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("json round trip is byte identical") {
  RouteInstance inst = toys::two_stop();
  std::string j1 = instance_to_json(inst);
  RouteInstance back = parse_instance_json(j1);
  CHECK(instance_to_json(back) == j1);
  CHECK(back.n_stops() == inst.n_stops());
  CHECK(back.thermo.air_heat_capacity_J_per_K == inst.thermo.air_heat_capacity_J_per_K);
  CHECK(back.classes[0].temp_max_K == inst.classes[0].temp_max_K);
}

TEST_CASE("cargo sets follow load and unload events") {
  RouteInstance inst = toys::two_stop();
  // Stage 1: depot pallets 0,1 drive. Stage 2: pallet 0 leaves during
  // handling, pallet 2 joins, so 1 handles and {1,2} drive.
  CHECK(inst.cargo_driving(1) == std::vector<int>{0, 1});
  CHECK(inst.cargo_handling(2) == std::vector<int>{1});
  CHECK(inst.cargo_driving(2) == std::vector<int>{1, 2});
  CHECK(inst.loaded_at_stage(1) == std::vector<int>{0, 1});
  CHECK(inst.loaded_at_stage(2) == std::vector<int>{2});
  CHECK(inst.depot_pallet_count() == 2);
  CHECK(inst.n_stages() == 2);
}

TEST_CASE("time grid indexes stages, phases, and ambient readings") {
  RouteInstance inst = toys::two_stop();
  TimeGrid grid(inst, {0, 3});
  // Stage 1: 2 driving slots. Stage 2: 3 handling + 2 driving.
  CHECK(grid.total_intervals() == 7);
  CHECK(grid.total_points() == 8);
  CHECK(grid.stage_begin(1) == 0);
  CHECK(grid.driving_begin(1) == 0);
  CHECK(grid.stage_end(1) == 2);
  CHECK(grid.stage_begin(2) == 2);
  CHECK(grid.driving_begin(2) == 5);
  CHECK(grid.i0(2) == 5);
  CHECK(grid.stage_of_interval(0) == 1);
  CHECK(grid.stage_of_interval(4) == 2);
  CHECK(grid.phase_of_interval(4) == Phase::Handling);
  CHECK(grid.phase_of_interval(5) == Phase::Driving);
  // Ambient readings advance per driving minute and pause while handling.
  CHECK(grid.ext_temp_K(0) == 291.0);
  CHECK(grid.ext_temp_K(1) == 292.0);
  CHECK(grid.ext_temp_K(2) == grid.ext_temp_K(3));  // handling holds the last reading
  CHECK(grid.ext_temp_K(5) == 291.0);
  CHECK(grid.delta_drive_s() == 60.0);
  for (int i = 0; i < grid.total_intervals(); ++i) {
    int s = grid.stage_of_interval(i);
    CHECK(s >= 1);
    CHECK(s <= 2);
  }
}

TEST_CASE("handling slot counts respect the euler stability bound") {
  RouteInstance inst = toys::two_stop();
  std::vector<int> slow = handling_slot_counts(inst, {0, 600.0});
  std::vector<int> fast = handling_slot_counts(inst, {0, 60.0});
  CHECK(slow[0] == 0);
  CHECK(fast[1] >= 1);
  CHECK(slow[1] >= fast[1]);  // longer doors need at least as many slots

  // Tripling the surface coefficient shrinks the stable step.
  RouteInstance hot = inst;
  for (auto& c : hot.classes) c.surface_coeff_W_per_m2K *= 3.0;
  std::vector<int> hot_slots = handling_slot_counts(hot, {0, 600.0});
  CHECK(hot_slots[1] >= slow[1]);

  TimeGrid grid(inst, slow);
  // Realized door times split into equal slots no longer than the grid cap.
  for (double realized : {30.0, 300.0, 600.0}) {
    std::vector<double> dts = handling_slot_durations(grid, 2, realized);
    CHECK(static_cast<int>(dts.size()) == slow[1]);
    double sum = 0;
    for (double dt : dts) {
      CHECK(dt <= grid.max_handling_slot_s(2) + 1e-12);
      CHECK(dt >= 0.0);
      sum += dt;
    }
    CHECK(sum == doctest::Approx(realized).epsilon(1e-12));
  }
}

TEST_CASE("cargo_at matches phase membership") {
  RouteInstance inst = toys::two_stop();
  TimeGrid grid(inst, {0, 1});
  CHECK(cargo_at(inst, grid, 0) == std::vector<int>{0, 1});   // stage-1 drive
  CHECK(cargo_at(inst, grid, 2) == std::vector<int>{1});      // stage-2 handling
  CHECK(cargo_at(inst, grid, 3) == std::vector<int>{1, 2});   // stage-2 drive
}
