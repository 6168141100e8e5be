// Generates the four shipped route instances (r1..r4) and the synthetic
// door-time model. Route shape: leg durations reconcile the tabulated
// averages with the tabulated total hours; the ambient profile is a tent
// (min at departure, max at 65% of the driving timeline) whose end value is
// solved so the per-minute mean matches the tabulated average; the manifest
// follows the published load/unload counts with FIFO destinations.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "coldchain/instance.hpp"
#include "coldchain/scenario.hpp"

using namespace coldchain;

namespace {

struct RouteSpec {
  std::string name;
  std::vector<int> leg_minutes;           // legs into stops 1..S
  double nominal_stop_minutes = 0;        // stops 1..S-1
  double temp_min_K = 0, temp_avg_K = 0, temp_max_K = 0;
  int depot_in = 0;
  std::vector<std::pair<int, int>> stop_in_out;  // stops 1..S
};

std::vector<RouteSpec> route_specs() {
  return {
      {"r1", {71, 71, 71, 71, 71, 70}, 17, 288, 291, 293, 25,
       {{2, 8}, {2, 0}, {2, 3}, {2, 1}, {2, 8}, {0, 15}}},
      {"r2", {89, 89, 89, 89, 89, 88}, 11, 288, 293, 296, 20,
       {{2, 1}, {2, 1}, {2, 4}, {2, 3}, {2, 1}, {0, 20}}},
      {"r3", {48, 48, 48, 48, 48, 47, 47, 47, 47, 47, 47}, 12, 291, 297, 299, 18,
       {{2, 1}, {2, 2}, {2, 0}, {2, 1}, {2, 2}, {2, 3}, {2, 7}, {2, 2}, {2, 3}, {2, 2},
        {0, 15}}},
      {"r4", {76, 76, 76, 76, 76, 76}, 12, 293, 296, 297, 15,
       {{2, 1}, {2, 4}, {2, 1}, {2, 3}, {2, 3}, {0, 13}}},
  };
}

// Piecewise-linear ambient profile over the n driving minutes: T_min at
// minute 0, T_max at 65% of the way, then linear to an end value chosen in
// closed form so the discrete mean equals T_avg (clamped into [min, max]).
std::vector<double> tent_profile(int n, double t_min, double t_avg, double t_max) {
  const int peak = static_cast<int>(std::lround(0.65 * (n - 1)));
  const int q = n - 1 - peak;
  // Rising segment sums to (peak+1)*(min+max)/2; solve the tail end value.
  double sum_rise = (peak + 1) * (t_min + t_max) / 2.0;
  double t_end =
      q > 0 ? t_max + 2.0 * (n * t_avg - sum_rise - q * t_max) / (q + 1) : t_max;
  t_end = std::min(std::max(t_end, t_min), t_max);
  std::vector<double> out(static_cast<size_t>(n));
  for (int m = 0; m < n; ++m) {
    double v = m <= peak ? t_min + (t_max - t_min) * (peak > 0 ? double(m) / peak : 1.0)
                         : t_max + (t_end - t_max) * double(m - peak) / q;
    out[static_cast<size_t>(m)] = v;
  }
  return out;
}

RouteInstance build(const RouteSpec& spec) {
  RouteInstance inst;
  inst.meta.name = spec.name;
  const int S = static_cast<int>(spec.leg_minutes.size());
  inst.meta.nominal_stop_minutes.assign(static_cast<size_t>(S - 1), spec.nominal_stop_minutes);

  ProductClass meat;
  meat.name = "meat";
  meat.surface_coeff_W_per_m2K = 4.0;  // experiment midpoint; grid cells override
  meat.pallet_area_m2 = 1.9;
  meat.heat_capacity_J_per_K = 7.8e5;
  meat.temp_min_K = 274.0;
  meat.temp_max_K = 277.0;
  inst.classes.push_back(meat);

  const int total_minutes =
      std::accumulate(spec.leg_minutes.begin(), spec.leg_minutes.end(), 0);
  std::vector<double> profile =
      tent_profile(total_minutes, spec.temp_min_K, spec.temp_avg_K, spec.temp_max_K);
  double mean = std::accumulate(profile.begin(), profile.end(), 0.0) / total_minutes;
  std::printf("%s: %d driving minutes, ambient mean %.3f K (target %.1f)\n",
              spec.name.c_str(), total_minutes, mean, spec.temp_avg_K);

  int offset = 0;
  for (int s = 0; s < S; ++s) {
    Stop st;
    st.drive_minutes = spec.leg_minutes[static_cast<size_t>(s)];
    st.ext_temps_K.assign(profile.begin() + offset,
                          profile.begin() + offset + st.drive_minutes);
    offset += st.drive_minutes;
    inst.stops.push_back(std::move(st));
  }

  // FIFO manifest: loads enter a queue in stop order; each stop's outs pop
  // from the front, fixing those pallets' destinations.
  std::vector<int> queue;
  int next_id = 0;
  auto load = [&](int stop, int count) {
    for (int k = 0; k < count; ++k) {
      Pallet p;
      p.id = next_id++;
      p.class_index = 0;
      p.load_stop = stop;
      inst.pallets.push_back(p);
      queue.push_back(p.id);
      if (stop > 0) inst.stops[static_cast<size_t>(stop - 1)].pallets_in.push_back(p.id);
    }
  };
  load(0, spec.depot_in);
  size_t head = 0;
  for (int s = 1; s <= S; ++s) {
    const auto [in_count, out_count] = spec.stop_in_out[static_cast<size_t>(s - 1)];
    for (int k = 0; k < out_count; ++k) {
      if (head >= queue.size()) throw std::runtime_error(spec.name + ": manifest underflow");
      int id = queue[head++];
      inst.pallets[static_cast<size_t>(id)].destination_stop = s;
      inst.stops[static_cast<size_t>(s - 1)].pallets_out.push_back(id);
    }
    if (s < S) load(s, in_count);
  }
  if (head != queue.size())
    throw std::runtime_error(spec.name + ": pallets left aboard after the final stop");

  inst.validate();
  return inst;
}

}  // namespace

int main(int argc, char** argv) {
  std::string out_dir = argc > 1 ? argv[1] : "data";
  std::filesystem::create_directories(out_dir + "/instances");

  for (const RouteSpec& spec : route_specs()) {
    RouteInstance inst = build(spec);
    std::string path = out_dir + "/instances/" + spec.name + ".json";
    std::ofstream out(path, std::ios::binary);
    out << instance_to_json(inst);
    if (!out) {
      std::fprintf(stderr, "write failed: %s\n", path.c_str());
      return 1;
    }
    RouteInstance back = load_instance(path);  // round-trip guard
    std::printf("%s: %d stops, %zu pallets, %.2f h nominal -> %s\n", spec.name.c_str(),
                back.n_stops(), back.pallets.size(), back.nominal_duration_hours(),
                path.c_str());
  }

  DoorTimeModel door = synthetic_door_time_model();
  std::string door_path = out_dir + "/door_model.json";
  std::ofstream out(door_path, std::ios::binary);
  out << door_time_model_to_json(door);
  if (!out) {
    std::fprintf(stderr, "write failed: %s\n", door_path.c_str());
    return 1;
  }
  std::printf("door model: intercept %.3f, %zu residuals -> %s\n", door.intercept,
              door.residual_pool.size(), door_path.c_str());
  return 0;
}
