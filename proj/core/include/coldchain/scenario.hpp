#pragma once

// Stochastic model of the per-stage exogenous data xi_s = (initial
// temperatures of the pallets loaded at stop s-1, door-open time O_s), plus
// the stage-wise lattice discretization used by the trained policy.
//
// Coordinate convention for xi_s as a vector: [O_s, temps...] with temps in
// loaded_at_stage(s) order. Stage 1 is deterministic (no handling, depot
// pallets board at known mid-range temperatures).

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "coldchain/instance.hpp"
#include "coldchain/scenario_path.hpp"

namespace coldchain {

// Predictor of log door-open seconds plus an empirical residual pool that is
// resampled verbatim, so sampled times are exp(fit + residual) and always
// positive. Feature set: meters of cargo moved across the door, optional
// per-class pallet counts and a quadratic meters term.
struct DoorTimeModel {
  double intercept = 0;                // ln seconds
  double per_meter = 0;
  double per_meter_sq = 0;
  std::vector<double> per_class;       // by class index; empty or short = 0
  std::vector<double> residual_pool;   // log-space residuals; empty = exact fit

  // 0.4 m of truck length per pallet moved in or out at the stop.
  double meters_moved(const RouteInstance& inst, int stop) const;
  double predict_log_seconds(const RouteInstance& inst, int stop) const;
  // exp(prediction + residual drawn uniformly from the pool).
  double sample_seconds(const RouteInstance& inst, int stop, std::mt19937_64& rng) const;
};

// Shipped synthetic model: the field data behind the published fit is not
// available, so the pool is drawn once from a truncated normal in log space
// with dispersion chosen to give stop-time spread of the order reported for
// the original fit. See data/door_model.json for the serialized artifact.
DoorTimeModel synthetic_door_time_model();

std::string door_time_model_to_json(const DoorTimeModel& m);
DoorTimeModel door_time_model_from_json(const std::string& text);
DoorTimeModel load_door_time_model(const std::string& path);

// Correlated arrival temperatures: marginally uniform on each pallet's class
// band, pairwise Pearson correlation pearson_target between pallets loaded at
// the same stop via a Gaussian copula with equicorrelated latent normals.
struct TempSampler {
  double pearson_target = 0.8;

  // Latent normal correlation that produces pearson_target between the
  // uniforms: 2*sin(pi*rho/6) inverts the Gaussian-copula rank formula.
  double latent_rho() const;

  // One draw for the pallets loaded at `stop` (1..S-1, or 0 for the depot),
  // in loaded-pallet id order.
  std::vector<double> sample(const RouteInstance& inst, int stop, std::mt19937_64& rng) const;
};

// Realized exogenous data for one stage.
struct StageXi {
  double door_open_s = 0;
  std::vector<double> loaded_temps_K;  // loaded_at_stage(s) order

  std::vector<double> coords() const;  // [O, temps...]
};

// Bundle of the samplers for one route, with switches that pin either
// component at its expectation for the value-of-information runs.
class ScenarioModel {
 public:
  ScenarioModel() = default;
  ScenarioModel(const RouteInstance* inst, DoorTimeModel door, TempSampler temps = {});

  bool fix_door_times = false;  // O_s frozen at E[O_s]
  bool fix_temps = false;       // arrival temps frozen at their expectations

  const RouteInstance& instance() const { return *inst_; }
  const DoorTimeModel& door_model() const { return door_; }
  const TempSampler& temp_sampler() const { return temps_; }

  // Stage 1 ignores the rng (deterministic root).
  StageXi sample_stage(int s, std::mt19937_64& rng) const;
  ScenarioPath sample_path(std::mt19937_64& rng) const;
  std::vector<ScenarioPath> sample_paths(int n, std::uint64_t seed) const;

  // Componentwise expectation of xi_s, Monte-Carlo averaged over a fixed
  // number of model samples on first use and cached (the fix switches do not
  // affect it; they substitute these values into sample_stage instead).
  const StageXi& expected_stage(int s) const;

  static constexpr int kExpectationSamples = 10000;
  static constexpr std::uint64_t kExpectationSeed = 0x8c75c9e6d5a1b3f7ULL;

 private:
  StageXi raw_sample_stage(int s, std::mt19937_64& rng) const;

  const RouteInstance* inst_ = nullptr;
  DoorTimeModel door_;
  TempSampler temps_;
  mutable std::vector<std::optional<StageXi>> expected_;
};

struct LatticeNode {
  StageXi xi;
  double prob = 0;
};

struct StageLattice {
  std::vector<LatticeNode> nodes;
  // Per-coordinate standard deviations of the generation sample, used to
  // standardize the rounding norm. A degenerate coordinate gets scale 1.
  std::vector<double> coord_scale;
};

// Stage-wise independent lattice: stage 1 holds the deterministic root as a
// single node, stages 2..S hold M nodes with cluster-share probabilities.
struct ScenarioLattice {
  std::vector<StageLattice> stages;     // index s-1
  std::vector<double> max_door_open_s;  // per stage, over the generation sample
  std::vector<int> handling_slots;      // |L_s| derived from max_door_open_s
  int nodes_per_stage = 0;

  int n_stages() const { return static_cast<int>(stages.size()); }
  const StageLattice& stage(int s) const { return stages.at(static_cast<size_t>(s - 1)); }

  // Index of the node nearest to xi in the standardized Euclidean norm;
  // ties resolve to the lowest index.
  int round_to(int s, const StageXi& xi) const;
};

// k-means (Lloyd) on standardized coordinates of n_gen model samples per
// stage; node probability = cluster share; an emptied cluster is reseeded by
// splitting the largest one. sse_trace, when given, receives one
// non-increasing within-cluster SSE series per stage s >= 2.
ScenarioLattice build_lattice(const ScenarioModel& model, int nodes_per_stage, int n_gen,
                              std::uint64_t seed,
                              std::vector<std::vector<double>>* sse_trace = nullptr);

std::string lattice_to_json(const ScenarioLattice& lat);
ScenarioLattice lattice_from_json(const std::string& text);
ScenarioLattice load_lattice(const std::string& path);

// Scenario sets as CSV: one row per (sample, stage) with the realized door
// time and the loaded-pallet temperatures, empty cells padding stages with
// fewer loaded pallets.
std::string scenarios_to_csv(const std::vector<ScenarioPath>& paths);
std::vector<ScenarioPath> scenarios_from_csv(const std::string& text);

struct AutocorrEstimate {
  double slope = 0;  // lag-1 OLS coefficient
  double lo = 0;     // 99% normal-approximation confidence interval
  double hi = 0;
};

// Lag-1 OLS autocorrelation of a residual series ordered by stop within a
// route. Throws std::invalid_argument on fewer than 3 consecutive pairs or a
// constant lagged regressor.
AutocorrEstimate residual_autocorrelation(const std::vector<double>& residuals);

}  // namespace coldchain
