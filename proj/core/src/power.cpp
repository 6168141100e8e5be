#include "coldchain/power.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "json.hpp"

namespace coldchain {
namespace {

// Refrigerant-side 1/COP fit constants: 1/COP = (a21*T_cu + a22*P + b2)/(a1*P + b1),
// pressure in bar, temperature in Celsius.
constexpr double kA1 = -6.7014e3;
constexpr double kB1 = 2.1729e5;
constexpr double kA21 = -9.0496e2;
constexpr double kA22 = 3.367e3;
constexpr double kB2 = -3.152e3;

constexpr double kCelsius = 273.15;

}  // namespace

double SaturationTable::pressure_at(double T_K) const {
  if (temp_K.size() < 2 || temp_K.size() != pressure_bar.size())
    throw std::invalid_argument("SaturationTable: need at least two (T, P) rows");
  if (T_K < temp_K.front() || T_K > temp_K.back())
    throw std::out_of_range("SaturationTable: temperature " + std::to_string(T_K) +
                            " K outside table range");
  auto hi = std::lower_bound(temp_K.begin(), temp_K.end(), T_K);
  if (hi == temp_K.begin()) return pressure_bar.front();
  size_t i = static_cast<size_t>(hi - temp_K.begin());
  double t0 = temp_K[i - 1], t1 = temp_K[i];
  double w = (T_K - t0) / (t1 - t0);
  return (1 - w) * pressure_bar[i - 1] + w * pressure_bar[i];
}

SaturationTable default_r134a_table() {
  SaturationTable t;
  // Saturated R134a, -40..50 C in 5 K steps (bar).
  const double tc[] = {-40, -35, -30, -25, -20, -15, -10, -5, 0,
                       5,   10,  15,  20,  25,  30,  35,  40, 45, 50};
  const double pb[] = {0.512, 0.661, 0.844, 1.064, 1.327, 1.639, 2.006,
                       2.434, 2.928, 3.497, 4.146, 4.884, 5.717, 6.653,
                       7.701, 8.870, 10.166, 11.599, 13.179};
  for (size_t i = 0; i < std::size(tc); ++i) {
    t.temp_K.push_back(tc[i] + kCelsius);
    t.pressure_bar.push_back(pb[i]);
  }
  return t;
}

ThetaCoeffs theta_from_pressure(double gamma_W_per_K, double condensing_pressure_bar) {
  const double den = kA1 * condensing_pressure_bar + kB1;
  if (!(den > 0))
    throw std::invalid_argument("theta_from_pressure: condensing pressure outside model validity");
  ThetaCoeffs th;
  th.t1 = -gamma_W_per_K * kA21 / den;
  th.t2 = -gamma_W_per_K * (kA22 * condensing_pressure_bar + kB2) / den;
  th.t3 = -th.t1;
  th.t4 = -th.t2;
  return th;
}

double exact_power(const ThetaCoeffs& th, double T_cu_K, double T_air_K) {
  const double x = T_cu_K - kCelsius;
  const double y = T_air_K - kCelsius;
  return th.t1 * x * x + th.t2 * x + th.t3 * x * y + th.t4 * y;
}

double MaxAffineModel::eval(double T_cu_K, double T_air_K) const {
  double best = -std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < phi0.size(); ++k)
    best = std::max(best, phi0[k] + phi1[k] * T_cu_K + phi2[k] * T_air_K);
  return best;
}

namespace {

struct FitData {
  const std::vector<double>& x;  // T_cu
  const std::vector<double>& y;  // T_air
  const std::vector<double>& w;
  size_t n() const { return w.size(); }
};

struct Planes {
  std::vector<double> p0, p1, p2;
  int k() const { return static_cast<int>(p0.size()); }
};

double eval_planes(const Planes& pl, double x, double y, int* which = nullptr) {
  double best = -std::numeric_limits<double>::infinity();
  int arg = 0;
  for (int k = 0; k < pl.k(); ++k) {
    double v = pl.p0[static_cast<size_t>(k)] + pl.p1[static_cast<size_t>(k)] * x +
               pl.p2[static_cast<size_t>(k)] * y;
    if (v > best) {
      best = v;
      arg = k;
    }
  }
  if (which) *which = arg;
  return best;
}

double sse_of(const FitData& d, const Planes& pl) {
  double sse = 0;
  for (size_t i = 0; i < d.n(); ++i) {
    double e = eval_planes(pl, d.x[i], d.y[i]) - d.w[i];
    sse += e * e;
  }
  return sse;
}

// Least-squares plane through the given sample indices, solved in centered
// coordinates for conditioning. Falls back to a constant plane for
// degenerate cells.
void fit_plane(const FitData& d, const std::vector<int>& idx, double* p0, double* p1, double* p2) {
  if (idx.size() < 3) {
    double mean = 0;
    for (int i : idx) mean += d.w[static_cast<size_t>(i)];
    *p0 = idx.empty() ? 0.0 : mean / static_cast<double>(idx.size());
    *p1 = *p2 = 0;
    return;
  }
  double mx = 0, my = 0, mw = 0;
  for (int i : idx) {
    mx += d.x[static_cast<size_t>(i)];
    my += d.y[static_cast<size_t>(i)];
    mw += d.w[static_cast<size_t>(i)];
  }
  const double n = static_cast<double>(idx.size());
  mx /= n; my /= n; mw /= n;
  Eigen::Matrix2d ata = Eigen::Matrix2d::Zero();
  Eigen::Vector2d atb = Eigen::Vector2d::Zero();
  for (int i : idx) {
    const double cx = d.x[static_cast<size_t>(i)] - mx;
    const double cy = d.y[static_cast<size_t>(i)] - my;
    const double cw = d.w[static_cast<size_t>(i)] - mw;
    ata(0, 0) += cx * cx; ata(0, 1) += cx * cy;
    ata(1, 0) += cy * cx; ata(1, 1) += cy * cy;
    atb(0) += cx * cw; atb(1) += cy * cw;
  }
  Eigen::Vector2d sol = ata.ldlt().solve(atb);
  if (!sol.allFinite()) sol.setZero();
  *p1 = sol(0);
  *p2 = sol(1);
  *p0 = mw - sol(0) * mx - sol(1) * my;
}

// Alternate assignment/refit. The exploring iterate may wander (reseeds can
// bump the error), but the returned planes are the best ever accepted, so
// the accepted SSE trace is non-increasing. An optional trace records it.
Planes iterate_partition(const FitData& d, Planes pl, int max_iters, std::mt19937_64& rng,
                         std::vector<double>* accepted_sse = nullptr) {
  Planes best = pl;
  double best_sse = sse_of(d, pl);
  if (accepted_sse) accepted_sse->push_back(best_sse);
  std::vector<int> assign(d.n(), -1);
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    std::vector<std::vector<int>> cells(static_cast<size_t>(pl.k()));
    for (size_t i = 0; i < d.n(); ++i) {
      int k;
      eval_planes(pl, d.x[i], d.y[i], &k);
      if (k != assign[i]) changed = true;
      assign[i] = k;
      cells[static_cast<size_t>(k)].push_back(static_cast<int>(i));
    }
    if (!changed && it > 0) break;

    Planes next = pl;
    for (int k = 0; k < pl.k(); ++k) {
      std::vector<int>& cell = cells[static_cast<size_t>(k)];
      if (cell.size() < 3) {
        // Degenerate cell: reseed from the worst-fitting cell so the freed
        // plane goes where the error lives.
        int worst = -1;
        double worst_sse = -1;
        for (int j = 0; j < pl.k(); ++j) {
          const std::vector<int>& cj = cells[static_cast<size_t>(j)];
          if (cj.size() < 6) continue;
          double s = 0;
          for (int i : cj) {
            const double e = eval_planes(pl, d.x[static_cast<size_t>(i)],
                                         d.y[static_cast<size_t>(i)]) -
                             d.w[static_cast<size_t>(i)];
            s += e * e;
          }
          if (s > worst_sse) {
            worst_sse = s;
            worst = j;
          }
        }
        const std::vector<int>* pool = nullptr;
        if (worst >= 0) pool = &cells[static_cast<size_t>(worst)];
        cell.clear();
        if (pool) {
          std::uniform_int_distribution<size_t> pick(0, pool->size() - 1);
          for (int t = 0; t < 3; ++t) cell.push_back((*pool)[pick(rng)]);
        } else {
          std::uniform_int_distribution<size_t> pick(0, d.n() - 1);
          for (int t = 0; t < 3; ++t) cell.push_back(static_cast<int>(pick(rng)));
        }
      }
      fit_plane(d, cell, &next.p0[static_cast<size_t>(k)], &next.p1[static_cast<size_t>(k)],
                &next.p2[static_cast<size_t>(k)]);
    }
    pl = std::move(next);
    const double sse = sse_of(d, pl);
    if (sse < best_sse) {
      best_sse = sse;
      best = pl;
      if (accepted_sse) accepted_sse->push_back(sse);
    }
  }
  return best;
}

// Voronoi partition around K random sample points (range-standardized
// coordinates): spatially coherent cells give genuinely distinct starting
// planes, unlike uniformly random partitions which all refit to the same
// global plane.
Planes voronoi_start(const FitData& d, int K, std::mt19937_64& rng) {
  double xlo = d.x[0], xhi = d.x[0], ylo = d.y[0], yhi = d.y[0];
  for (size_t i = 1; i < d.n(); ++i) {
    xlo = std::min(xlo, d.x[i]); xhi = std::max(xhi, d.x[i]);
    ylo = std::min(ylo, d.y[i]); yhi = std::max(yhi, d.y[i]);
  }
  const double sx = xhi > xlo ? 1.0 / (xhi - xlo) : 1.0;
  const double sy = yhi > ylo ? 1.0 / (yhi - ylo) : 1.0;

  std::uniform_int_distribution<size_t> pick(0, d.n() - 1);
  std::vector<size_t> seeds;
  while (static_cast<int>(seeds.size()) < K) {
    size_t c = pick(rng);
    if (std::find(seeds.begin(), seeds.end(), c) == seeds.end()) seeds.push_back(c);
  }
  std::vector<std::vector<int>> cells(static_cast<size_t>(K));
  for (size_t i = 0; i < d.n(); ++i) {
    int arg = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
      const double dx = (d.x[i] - d.x[seeds[static_cast<size_t>(k)]]) * sx;
      const double dy = (d.y[i] - d.y[seeds[static_cast<size_t>(k)]]) * sy;
      const double dist = dx * dx + dy * dy;
      if (dist < bd) {
        bd = dist;
        arg = k;
      }
    }
    cells[static_cast<size_t>(arg)].push_back(static_cast<int>(i));
  }
  Planes pl;
  pl.p0.assign(static_cast<size_t>(K), 0);
  pl.p1.assign(static_cast<size_t>(K), 0);
  pl.p2.assign(static_cast<size_t>(K), 0);
  for (int k = 0; k < K; ++k)
    fit_plane(d, cells[static_cast<size_t>(k)], &pl.p0[static_cast<size_t>(k)],
              &pl.p1[static_cast<size_t>(k)], &pl.p2[static_cast<size_t>(k)]);
  return pl;
}

std::vector<double>* next_trace(const FitOptions& opt) {
  if (!opt.sse_runs) return nullptr;
  opt.sse_runs->emplace_back();
  return &opt.sse_runs->back();
}

double wmape_of(const FitData& d, const Planes& pl) {
  double num = 0, den = 0;
  for (size_t i = 0; i < d.n(); ++i) {
    num += std::abs(eval_planes(pl, d.x[i], d.y[i]) - d.w[i]);
    den += std::abs(d.w[i]);
  }
  return den > 0 ? num / den : 0.0;
}

}  // namespace

MaxAffineModel fit_max_affine(const std::vector<double>& tcu_K, const std::vector<double>& tair_K,
                              const std::vector<double>& w_W, const FitOptions& opt) {
  if (tcu_K.size() != tair_K.size() || tcu_K.size() != w_W.size() || w_W.empty())
    throw std::invalid_argument("fit_max_affine: inputs must be equal-length and non-empty");
  if (opt.n_planes < 1) throw std::invalid_argument("fit_max_affine: n_planes must be >= 1");

  const FitData d{tcu_K, tair_K, w_W};

  // Grow plane counts 1..K; each size keeps its best candidate by wMAPE.
  // Including the previous best padded with a duplicate plane (identical
  // function) makes the chosen wMAPE non-increasing in the plane count.
  // Each size draws its restarts from its own (seed, size) stream with a
  // size-independent restart count, so a separate call with a smaller
  // n_planes replays exactly the same candidates for the shared sizes and
  // the monotonicity extends across calls.
  Planes best;
  double best_wmape = std::numeric_limits<double>::infinity();
  const int per_size =
      std::max(1, std::min(opt.restarts, 50 / std::max(1, opt.n_planes)));

  for (int K = 1; K <= opt.n_planes; ++K) {
    std::mt19937_64 rng(opt.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(K)));
    std::vector<Planes> candidates;
    if (K == 1) {
      std::vector<int> all(d.n());
      std::iota(all.begin(), all.end(), 0);
      Planes pl;
      pl.p0.assign(1, 0); pl.p1.assign(1, 0); pl.p2.assign(1, 0);
      fit_plane(d, all, &pl.p0[0], &pl.p1[0], &pl.p2[0]);
      candidates.push_back(pl);
    } else {
      Planes padded = best;
      padded.p0.push_back(best.p0.back());
      padded.p1.push_back(best.p1.back());
      padded.p2.push_back(best.p2.back());
      candidates.push_back(padded);  // evaluates identically to the K-1 best
      candidates.push_back(iterate_partition(d, padded, opt.max_iters, rng, next_trace(opt)));
    }
    for (int r = 0; r < per_size; ++r)
      candidates.push_back(
          iterate_partition(d, voronoi_start(d, K, rng), opt.max_iters, rng, next_trace(opt)));

    Planes k_best;
    double k_wmape = std::numeric_limits<double>::infinity();
    for (const Planes& c : candidates) {
      const double wm = wmape_of(d, c);
      if (wm < k_wmape) {
        k_wmape = wm;
        k_best = c;
      }
    }
    best = std::move(k_best);
    best_wmape = k_wmape;
  }

  MaxAffineModel m;
  m.phi0 = best.p0;
  m.phi1 = best.p1;
  m.phi2 = best.p2;
  m.wmape = best_wmape;
  double wmax = 0;
  for (double w : w_W) wmax = std::max(wmax, std::abs(w));
  const double floor = 0.01 * wmax;
  double worst = 0;
  for (size_t i = 0; i < d.n(); ++i) {
    const double e = std::abs(eval_planes(best, d.x[i], d.y[i]) - d.w[i]);
    worst = std::max(worst, e / std::max(std::abs(d.w[i]), floor));
  }
  m.max_rel_err = worst;
  return m;
}

double w_max(const MaxAffineModel& m, double fluid_floor_K, double T_air_K, double power_cap_W) {
  return std::min(m.eval(fluid_floor_K, T_air_K), power_cap_W);
}

double tcu_for_power(const MaxAffineModel& m, double T_air_K, double W_target,
                     double fluid_floor_K) {
  // Power falls as the fluid warms, so each decreasing plane crosses the
  // target once; the surrogate (their max) crosses at the largest of those.
  double best = -std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < m.phi0.size(); ++k) {
    if (m.phi1[k] >= -1e-12) continue;
    best = std::max(best, (W_target - m.phi0[k] - m.phi2[k] * T_air_K) / m.phi1[k]);
  }
  if (!std::isfinite(best)) return T_air_K;
  return std::clamp(best, fluid_floor_K, T_air_K);
}

int PowerModels::bucket_of(double T_ext_K) { return static_cast<int>(std::llround(T_ext_K)); }

const MaxAffineModel& PowerModels::for_ext(double T_ext_K) const {
  auto it = by_bucket.find(bucket_of(T_ext_K));
  if (it == by_bucket.end())
    throw std::out_of_range("PowerModels: no surrogate for ambient bucket " +
                            std::to_string(bucket_of(T_ext_K)) + " K");
  return it->second;
}

PowerModels build_power_models(const RouteInstance& inst, const SaturationTable& table,
                               const FitGrid& grid, const FitOptions& opt) {
  std::set<int> buckets;
  for (int s = 1; s <= inst.n_stages(); ++s) {
    for (double t : inst.stop(s).ext_temps_K) buckets.insert(PowerModels::bucket_of(t));
    if (s >= 2) buckets.insert(PowerModels::bucket_of(inst.handling_ext_temp_K(s)));
  }

  // Shared fit grid coordinates: ambient rows, each with fluid values from
  // the floor up to that ambient (the LP never heats, so T_cu <= T_air).
  std::vector<double> xs, ys;
  xs.reserve(static_cast<size_t>(grid.n_air * grid.n_tcu));
  ys.reserve(xs.capacity());
  for (int a = 0; a < grid.n_air; ++a) {
    const double air = grid.air_lo_K + (grid.air_hi_K - grid.air_lo_K) * a /
                                           std::max(1, grid.n_air - 1);
    for (int c = 0; c < grid.n_tcu; ++c) {
      const double tcu = grid.fluid_floor_K +
                         (air - grid.fluid_floor_K) * c / std::max(1, grid.n_tcu - 1);
      xs.push_back(tcu);
      ys.push_back(air);
    }
  }

  PowerModels pm;
  pm.gamma_W_per_K = inst.thermo.evaporator_coupling_W_per_K;
  pm.n_planes = opt.n_planes;
  for (int b : buckets) {
    const ThetaCoeffs th = theta_from_pressure(pm.gamma_W_per_K, table.pressure_at(b));
    std::vector<double> ws(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) ws[i] = exact_power(th, xs[i], ys[i]);
    FitOptions o = opt;
    o.seed = opt.seed + static_cast<std::uint64_t>(b);  // per-bucket stream
    MaxAffineModel model = fit_max_affine(xs, ys, ws, o);
    model.ext_bucket_K = b;
    pm.by_bucket.emplace(b, std::move(model));
  }
  return pm;
}

std::string power_models_to_json(const PowerModels& pm) {
  nlohmann::ordered_json j;
  j["gamma_W_per_K"] = pm.gamma_W_per_K;
  j["n_planes"] = pm.n_planes;
  nlohmann::ordered_json buckets = nlohmann::ordered_json::object();
  for (const auto& [b, m] : pm.by_bucket) {
    nlohmann::ordered_json e;
    e["planes"] = nlohmann::ordered_json::array();
    for (int k = 0; k < m.n_planes(); ++k)
      e["planes"].push_back({m.phi0[static_cast<size_t>(k)], m.phi1[static_cast<size_t>(k)],
                             m.phi2[static_cast<size_t>(k)]});
    e["wmape"] = m.wmape;
    e["max_rel_err"] = m.max_rel_err;
    buckets[std::to_string(b)] = e;
  }
  j["buckets"] = buckets;
  return j.dump(2) + "\n";
}

PowerModels power_models_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  PowerModels pm;
  pm.gamma_W_per_K = j.at("gamma_W_per_K").get<double>();
  pm.n_planes = j.at("n_planes").get<int>();
  for (auto& [key, e] : j.at("buckets").items()) {
    MaxAffineModel m;
    m.ext_bucket_K = std::stoi(key);
    for (const auto& pl : e.at("planes")) {
      m.phi0.push_back(pl.at(0).get<double>());
      m.phi1.push_back(pl.at(1).get<double>());
      m.phi2.push_back(pl.at(2).get<double>());
    }
    m.wmape = e.at("wmape").get<double>();
    m.max_rel_err = e.at("max_rel_err").get<double>();
    pm.by_bucket.emplace(m.ext_bucket_K, std::move(m));
  }
  return pm;
}

PowerModels load_power_models(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_power_models: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return power_models_from_json(buf.str());
}

}  // namespace coldchain
