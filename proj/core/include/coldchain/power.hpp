#pragma once

// Compressor electrical power model. The refrigerant-side fit expresses
// 1/COP as an affine function of the cooling-fluid temperature and the
// condensing pressure; combined with the evaporator heat flow
// gamma*(T_air - T_cu) this yields a quadratic power map
//     W(T_cu, T_air) = t1*T_cu^2 + t2*T_cu + t3*T_cu*T_air + t4*T_air
// with t3 = -t1 and t4 = -t2. The fitted constants expect temperatures in
// Celsius; the public API is Kelvin and shifts internally. For use inside
// LPs the map is replaced by a convex max-of-planes surrogate fitted per
// 1 K ambient-temperature bucket (the condensing pressure, and hence the
// quadratic, changes with the ambient).

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "coldchain/instance.hpp"

namespace coldchain {

struct ThetaCoeffs {
  double t1 = 0, t2 = 0, t3 = 0, t4 = 0;
};

// Saturation pressure lookup (K -> bar), linearly interpolated. Bundled
// default covers R134a from -40 to 50 C; a custom table may be supplied to
// model other refrigerants or an approach-temperature offset.
struct SaturationTable {
  std::vector<double> temp_K;
  std::vector<double> pressure_bar;

  double pressure_at(double T_K) const;  // throws outside the table range
};

SaturationTable default_r134a_table();

// Refrigerant-side affine 1/COP constants (pressure in bar, temperature in
// Celsius), and the resulting quadratic coefficients for a given evaporator
// coupling gamma.
ThetaCoeffs theta_from_pressure(double gamma_W_per_K, double condensing_pressure_bar);

// Exact quadratic power, W. Zero when T_cu == T_air for any coefficients
// produced by theta_from_pressure (t1+t3 = t2+t4 = 0).
double exact_power(const ThetaCoeffs& th, double T_cu_K, double T_air_K);

struct MaxAffineModel {
  // Plane k evaluates phi0[k] + phi1[k]*T_cu_K + phi2[k]*T_air_K.
  std::vector<double> phi0, phi1, phi2;
  double wmape = 0;        // sum|err| / sum|W| on the fit grid
  double max_rel_err = 0;  // |err| / max(|W|, 1% of grid max |W|)
  int ext_bucket_K = 0;    // ambient bucket this model belongs to

  int n_planes() const { return static_cast<int>(phi0.size()); }
  double eval(double T_cu_K, double T_air_K) const;
};

struct FitOptions {
  int n_planes = 4;
  std::uint64_t seed = 20240901;
  int restarts = 5;       // Voronoi restarts per plane count (total capped at 50)
  int max_iters = 100;    // partition-refit rounds per candidate
  // Optional diagnostics: one accepted-SSE trace per partition-refit run,
  // each non-increasing by construction.
  std::vector<std::vector<double>>* sse_runs = nullptr;
};

// Least-squares partition fit of a max-affine surrogate: alternate between
// assigning each sample to its active plane and refitting planes by least
// squares, keeping the best iterate seen (accepted SSE is non-increasing).
// Restarts use Voronoi partitions around random sample points. Candidates
// include hierarchical seeds grown from the best smaller model, and each
// plane count draws from its own seed stream, so the reported wMAPE is
// non-increasing in n_planes even across separate calls.
MaxAffineModel fit_max_affine(const std::vector<double>& tcu_K, const std::vector<double>& tair_K,
                              const std::vector<double>& w_W, const FitOptions& opt);

// Largest deliverable cooling power at air temperature T_air: the surrogate
// evaluated at the fluid floor, capped by the unit's electrical limit.
double w_max(const MaxAffineModel& m, double fluid_floor_K, double T_air_K, double power_cap_W);

// Fluid temperature at which the surrogate meets a power target (used when
// the floor setpoint would exceed the capacity): the largest crossing of the
// decreasing planes, clamped into [fluid_floor, T_air].
double tcu_for_power(const MaxAffineModel& m, double T_air_K, double W_target,
                     double fluid_floor_K);

// Fit grid used for route models: n_air cabin-air values spanning
// [air_lo, air_hi], each with n_tcu fluid values spanning [fluid_floor, T_air].
// The air range ends at 288.15 K because the quadratic is only credible in
// the cooling regime (it turns negative near the warm diagonal); warmer air
// during post-handling pulldown is served by the planes' convex extension,
// which errs on the conservative side.
struct FitGrid {
  double fluid_floor_K = 263.15;
  double air_lo_K = 268.15;
  double air_hi_K = 288.15;
  int n_air = 100;
  int n_tcu = 100;
};

// One surrogate per distinct 1 K ambient bucket appearing on the route.
struct PowerModels {
  double gamma_W_per_K = 0;
  int n_planes = 0;
  std::map<int, MaxAffineModel> by_bucket;

  const MaxAffineModel& for_ext(double T_ext_K) const;
  static int bucket_of(double T_ext_K);
};

PowerModels build_power_models(const RouteInstance& inst, const SaturationTable& table,
                               const FitGrid& grid, const FitOptions& opt);

std::string power_models_to_json(const PowerModels& pm);
PowerModels power_models_from_json(const std::string& text);
PowerModels load_power_models(const std::string& path);

}  // namespace coldchain
