#pragma once

// Route instance model: one refrigerated delivery tour with a depot, S stops,
// per-minute ambient temperatures while driving, and a pallet manifest.
//
// Conventions used throughout the library:
//   - temperatures in K, durations in s, power in W, heat capacity in J/K
//   - stops are indexed 1..S, the depot is stop 0
//   - stage s (1..S) = [arrival at stop s-1, arrival at stop s); stage 1 is
//     driving only, stages 2..S open with a handling phase at stop s-1
//   - pallets unloaded at a stop leave at the first handling slot of the
//     following stage; pallets loaded there enter when the doors close
//     (first driving slot). Unloading at the final stop is not modeled.

#include <cstdint>
#include <string>
#include <vector>

namespace coldchain {

struct ProductClass {
  std::string name;
  double surface_coeff_W_per_m2K = 0;  // film coefficient h between cargo air and pallet
  double pallet_area_m2 = 0;
  double heat_capacity_J_per_K = 0;
  double temp_min_K = 0;
  double temp_max_K = 0;

  // beta: aggregate air<->product exchange coefficient for one pallet, W/K.
  double beta() const { return surface_coeff_W_per_m2K * pallet_area_m2; }
};

struct Pallet {
  int id = -1;
  int class_index = -1;
  int load_stop = -1;         // 0 = depot
  int destination_stop = -1;  // load_stop < destination_stop <= S
};

struct Stop {
  int drive_minutes = 0;                // leg arriving at this stop
  std::vector<double> ext_temps_K;      // one value per driving minute of the leg
  std::vector<int> pallets_in;          // loaded at this stop
  std::vector<int> pallets_out;         // unloaded at this stop
};

struct ThermoParams {
  double wall_U_W_per_m2K = 0.4;
  double wall_area_closed_m2 = 153.9;
  double wall_area_open_m2 = 146.9;
  double infiltration_kg_per_s = 2.6;       // air mass flow through open doors
  double air_specific_heat_J_per_kgK = 1005.6;
  double air_heat_capacity_J_per_K = 120513.0;
  double evaporator_coupling_W_per_K = 300.0;  // gamma
  double power_cap_W = 12000.0;                // compressor electrical limit
  double fluid_floor_K = 263.15;               // lowest admissible cooling-fluid setpoint
  double fuel_energy_J_per_L = 9.504e6;        // electrical energy per litre of fuel
};

struct RouteMeta {
  std::string name;
  // Planning-time stop durations (stops 1..S-1), only used to report the
  // nominal tour length; realized door-open times are random.
  std::vector<double> nominal_stop_minutes;
};

struct RouteInstance {
  RouteMeta meta;
  ThermoParams thermo;
  std::vector<ProductClass> classes;
  std::vector<Pallet> pallets;
  std::vector<Stop> stops;  // stops[0] is stop 1; size() == S
  double initial_air_temp_K = 275.5;
  double delta_drive_s = 60.0;  // driving slot length

  int n_stops() const { return static_cast<int>(stops.size()); }
  int n_stages() const { return n_stops(); }
  const Stop& stop(int s) const { return stops.at(static_cast<size_t>(s - 1)); }

  int depot_pallet_count() const;
  double nominal_duration_hours() const;

  // Pallets on board during the driving phase of stage s (also the boundary
  // state support at the end of stage s): loaded at stop <= s-1, not yet
  // unloaded (destination >= s). Sorted by id.
  std::vector<int> cargo_driving(int s) const;
  // Pallets on board during the handling phase of stage s (s >= 2): the
  // previous driving cargo minus the pallets removed at stop s-1.
  std::vector<int> cargo_handling(int s) const;
  // Pallets loaded at stop s-1, i.e. entering at the first driving slot of
  // stage s.
  std::vector<int> loaded_at_stage(int s) const;

  // Sum of beta over a pallet id set.
  double beta_sum(const std::vector<int>& pallet_ids) const;

  const ProductClass& pallet_class(int pallet_id) const {
    return classes.at(static_cast<size_t>(
        pallets.at(static_cast<size_t>(pallet_id)).class_index));
  }

  // Ambient temperature held during the handling phase of stage s: the value
  // at the arrival minute of the leg into stop s-1.
  double handling_ext_temp_K(int s) const;

  // Throws std::invalid_argument naming the offending field on any
  // inconsistency (bounds, manifest mismatches, slot-length stability).
  void validate() const;
};

// Parses and validates an instance file. Errors carry the JSON path of the
// offending field.
RouteInstance load_instance(const std::string& path);
RouteInstance parse_instance_json(const std::string& json_text,
                                  const std::string& origin = "<memory>");
std::string instance_to_json(const RouteInstance& inst);

enum class Phase : std::uint8_t { Handling, Driving };

// Discretization of one tour. Driving slots are fixed at delta_drive_s;
// handling slot counts are chosen when the scenario model is known (the
// realized door-open time is spread uniformly over the stage's slots), so the
// grid stores counts only and per-scenario durations are derived.
class TimeGrid {
 public:
  TimeGrid() = default;
  // handling_slots[s-1] gives |L_s| for stage s; stage 1 must have 0.
  TimeGrid(const RouteInstance& inst, std::vector<int> handling_slots);

  int n_stages() const { return static_cast<int>(stage_.size()); }
  int handling_slots(int s) const { return stage_at(s).handling; }
  int driving_slots(int s) const { return stage_at(s).driving; }
  int total_intervals() const { return total_intervals_; }
  int total_points() const { return total_intervals_ + 1; }

  // First interval index of stage s, and of its driving phase.
  int stage_begin(int s) const { return stage_at(s).begin; }
  int stage_end(int s) const { return stage_at(s).begin + stage_at(s).handling + stage_at(s).driving; }
  int driving_begin(int s) const { return stage_at(s).begin + stage_at(s).handling; }
  // Point index where newly loaded pallets appear (doors just closed).
  int i0(int s) const { return driving_begin(s); }

  int stage_of_interval(int i) const;
  Phase phase_of_interval(int i) const {
    int s = stage_of_interval(i);
    return i < driving_begin(s) ? Phase::Handling : Phase::Driving;
  }

  // Ambient temperature seen by interval i (driving: the leg minute;
  // handling: held at the arrival value).
  double ext_temp_K(int i) const { return ext_K_.at(static_cast<size_t>(i)); }
  double delta_drive_s() const { return delta_drive_s_; }

  // Maximum admissible handling slot length per stage (forward-Euler
  // monotonicity with doors open), as enforced at construction time.
  double max_handling_slot_s(int s) const { return max_handling_dt_.at(static_cast<size_t>(s - 1)); }

 private:
  struct StageSpan {
    int begin = 0;
    int handling = 0;
    int driving = 0;
  };
  const StageSpan& stage_at(int s) const { return stage_.at(static_cast<size_t>(s - 1)); }

  std::vector<StageSpan> stage_;
  std::vector<double> ext_K_;          // per interval
  std::vector<double> max_handling_dt_;
  double delta_drive_s_ = 60.0;
  int total_intervals_ = 0;
};

// Handling slot counts that satisfy both the one-minute cap and the
// forward-Euler stability guard, given the largest door-open time (seconds)
// expected per stage. max_door_open_s[s-1] == 0 for stages without handling.
std::vector<int> handling_slot_counts(const RouteInstance& inst,
                                      const std::vector<double>& max_door_open_s);

// Uniform split of a realized door-open time over the stage's handling slots.
// Empty for stages without handling (O must then be 0).
std::vector<double> handling_slot_durations(const TimeGrid& grid, int s, double door_open_s);

// Pallets on board during interval i (handling intervals exclude pallets
// removed at the stop as well as pallets not yet loaded).
std::vector<int> cargo_at(const RouteInstance& inst, const TimeGrid& grid, int interval);

}  // namespace coldchain
