#pragma once

// One realized tour: door-open duration per stage and initial temperatures of
// the pallets loaded at each stop, in pallet-id order of loaded_at_stage(s).
// Stage 1 has door_open_s == 0 and carries the depot pallets' temperatures.

#include <vector>

namespace coldchain {

struct ScenarioPath {
  std::vector<double> door_open_s;                // size S, [0] == 0
  std::vector<std::vector<double>> loaded_temps_K;  // size S

  int n_stages() const { return static_cast<int>(door_open_s.size()); }
};

}  // namespace coldchain
