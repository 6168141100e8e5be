#include "coldchain/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "coldchain/csv.hpp"
#include "json.hpp"

namespace coldchain {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr double kMetersPerPallet = 0.4;

// Distinct sub-streams from one seed: path/stage k gets its own generator so
// workers can draw in any order and still reproduce byte-identical results.
std::uint64_t split_seed(std::uint64_t seed, std::uint64_t k) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (k + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

std::vector<int> moved_counts_by_class(const RouteInstance& inst, int stop) {
  std::vector<int> counts(inst.classes.size(), 0);
  auto add = [&](int pallet_id) {
    counts.at(static_cast<size_t>(inst.pallets.at(static_cast<size_t>(pallet_id)).class_index))++;
  };
  if (stop == 0) {
    for (const Pallet& p : inst.pallets)
      if (p.load_stop == 0) add(p.id);
  } else {
    for (int id : inst.stop(stop).pallets_in) add(id);
    for (int id : inst.stop(stop).pallets_out) add(id);
  }
  return counts;
}

}  // namespace

double DoorTimeModel::meters_moved(const RouteInstance& inst, int stop) const {
  std::vector<int> counts = moved_counts_by_class(inst, stop);
  int moved = std::accumulate(counts.begin(), counts.end(), 0);
  return kMetersPerPallet * moved;
}

double DoorTimeModel::predict_log_seconds(const RouteInstance& inst, int stop) const {
  double m = meters_moved(inst, stop);
  double f = intercept + per_meter * m + per_meter_sq * m * m;
  std::vector<int> counts = moved_counts_by_class(inst, stop);
  for (size_t c = 0; c < counts.size() && c < per_class.size(); ++c)
    f += per_class[c] * counts[c];
  return f;
}

double DoorTimeModel::sample_seconds(const RouteInstance& inst, int stop,
                                     std::mt19937_64& rng) const {
  double f = predict_log_seconds(inst, stop);
  double eps = 0;
  if (!residual_pool.empty()) {
    std::uniform_int_distribution<size_t> pick(0, residual_pool.size() - 1);
    eps = residual_pool[pick(rng)];
  }
  return std::exp(f + eps);
}

DoorTimeModel synthetic_door_time_model() {
  DoorTimeModel m;
  m.intercept = 5.823;
  m.per_meter = 0.35;
  // Log-space noise with sd 0.5 truncated to +-1: multiplicative spread of
  // roughly e^{+-0.5} around a 15-20 min stop, matching the dispersion the
  // original door-time fit reports. Fixed seed so the shipped pool is stable.
  std::mt19937_64 rng(0x5eed0d002ULL);
  std::normal_distribution<double> noise(0.0, 0.5);
  m.residual_pool.reserve(512);
  while (m.residual_pool.size() < 512) {
    double e = noise(rng);
    if (std::abs(e) <= 1.0) m.residual_pool.push_back(e);
  }
  return m;
}

std::string door_time_model_to_json(const DoorTimeModel& m) {
  ordered_json j;
  j["intercept"] = m.intercept;
  j["per_meter"] = m.per_meter;
  j["per_meter_sq"] = m.per_meter_sq;
  j["per_class"] = m.per_class;
  j["residual_pool"] = m.residual_pool;
  return j.dump(2) + "\n";
}

DoorTimeModel door_time_model_from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  DoorTimeModel m;
  m.intercept = j.at("intercept").get<double>();
  m.per_meter = j.at("per_meter").get<double>();
  m.per_meter_sq = j.value("per_meter_sq", 0.0);
  if (j.contains("per_class")) m.per_class = j["per_class"].get<std::vector<double>>();
  m.residual_pool = j.at("residual_pool").get<std::vector<double>>();
  return m;
}

DoorTimeModel load_door_time_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open door-time model: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return door_time_model_from_json(ss.str());
}

double TempSampler::latent_rho() const { return 2.0 * std::sin(M_PI * pearson_target / 6.0); }

std::vector<double> TempSampler::sample(const RouteInstance& inst, int stop,
                                        std::mt19937_64& rng) const {
  std::vector<int> ids = inst.loaded_at_stage(stop + 1);
  std::vector<double> out(ids.size());
  if (ids.empty()) return out;
  double rho = latent_rho();
  std::normal_distribution<double> gauss(0.0, 1.0);
  // Equicorrelated latents: z_j = sqrt(rho)*z0 + sqrt(1-rho)*e_j, then the
  // probability transform maps each to its uniform marginal.
  double z0 = gauss(rng);
  double a = std::sqrt(rho), b = std::sqrt(1.0 - rho);
  for (size_t k = 0; k < ids.size(); ++k) {
    double z = a * z0 + b * gauss(rng);
    double u = normal_cdf(z);
    const ProductClass& pc = inst.pallet_class(ids[k]);
    out[k] = pc.temp_min_K + u * (pc.temp_max_K - pc.temp_min_K);
  }
  return out;
}

std::vector<double> StageXi::coords() const {
  std::vector<double> c;
  c.reserve(1 + loaded_temps_K.size());
  c.push_back(door_open_s);
  c.insert(c.end(), loaded_temps_K.begin(), loaded_temps_K.end());
  return c;
}

ScenarioModel::ScenarioModel(const RouteInstance* inst, DoorTimeModel door, TempSampler temps)
    : inst_(inst), door_(std::move(door)), temps_(temps) {
  expected_.resize(static_cast<size_t>(inst->n_stages()));
}

StageXi ScenarioModel::raw_sample_stage(int s, std::mt19937_64& rng) const {
  StageXi xi;
  if (s == 1) {
    // Deterministic root: depot pallets board at the middle of their band.
    for (int id : inst_->loaded_at_stage(1)) {
      const ProductClass& pc = inst_->pallet_class(id);
      xi.loaded_temps_K.push_back(0.5 * (pc.temp_min_K + pc.temp_max_K));
    }
    return xi;
  }
  int stop = s - 1;
  xi.door_open_s = door_.sample_seconds(*inst_, stop, rng);
  xi.loaded_temps_K = temps_.sample(*inst_, stop, rng);
  return xi;
}

StageXi ScenarioModel::sample_stage(int s, std::mt19937_64& rng) const {
  // Draws are consumed even for pinned components so the same seed yields the
  // same trajectories for the unpinned ones across model variants.
  StageXi xi = raw_sample_stage(s, rng);
  if (s >= 2 && (fix_door_times || fix_temps)) {
    const StageXi& mean = expected_stage(s);
    if (fix_door_times) xi.door_open_s = mean.door_open_s;
    if (fix_temps) xi.loaded_temps_K = mean.loaded_temps_K;
  }
  return xi;
}

ScenarioPath ScenarioModel::sample_path(std::mt19937_64& rng) const {
  ScenarioPath path;
  int S = inst_->n_stages();
  path.door_open_s.resize(static_cast<size_t>(S));
  path.loaded_temps_K.resize(static_cast<size_t>(S));
  for (int s = 1; s <= S; ++s) {
    StageXi xi = sample_stage(s, rng);
    path.door_open_s[static_cast<size_t>(s - 1)] = xi.door_open_s;
    path.loaded_temps_K[static_cast<size_t>(s - 1)] = std::move(xi.loaded_temps_K);
  }
  return path;
}

std::vector<ScenarioPath> ScenarioModel::sample_paths(int n, std::uint64_t seed) const {
  std::vector<ScenarioPath> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng(split_seed(seed, static_cast<std::uint64_t>(i)));
    out.push_back(sample_path(rng));
  }
  return out;
}

const StageXi& ScenarioModel::expected_stage(int s) const {
  auto& slot = expected_.at(static_cast<size_t>(s - 1));
  if (slot) return *slot;
  if (s == 1) {
    std::mt19937_64 rng(0);
    slot = raw_sample_stage(1, rng);
    return *slot;
  }
  std::mt19937_64 rng(split_seed(kExpectationSeed, static_cast<std::uint64_t>(s)));
  StageXi mean;
  mean.loaded_temps_K.assign(inst_->loaded_at_stage(s).size(), 0.0);
  for (int i = 0; i < kExpectationSamples; ++i) {
    StageXi xi = raw_sample_stage(s, rng);
    mean.door_open_s += xi.door_open_s;
    for (size_t k = 0; k < mean.loaded_temps_K.size(); ++k)
      mean.loaded_temps_K[k] += xi.loaded_temps_K[k];
  }
  mean.door_open_s /= kExpectationSamples;
  for (double& t : mean.loaded_temps_K) t /= kExpectationSamples;
  slot = std::move(mean);
  return *slot;
}

int ScenarioLattice::round_to(int s, const StageXi& xi) const {
  const StageLattice& st = stage(s);
  if (st.nodes.empty()) throw std::invalid_argument("round_to: stage has no nodes");
  std::vector<double> c = xi.coords();
  if (c.size() != st.coord_scale.size())
    throw std::invalid_argument("round_to: coordinate dimension mismatch");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < st.nodes.size(); ++k) {
    std::vector<double> nc = st.nodes[k].xi.coords();
    double d = 0;
    for (size_t j = 0; j < c.size(); ++j) {
      double diff = (c[j] - nc[j]) / st.coord_scale[j];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

namespace {

// Lloyd iterations over flat row-major data; returns final assignment.
// Records SSE at every assignment pass; reseeding an emptied cluster from the
// largest cluster's farthest member only lowers SSE, so the trace stays
// non-increasing.
std::vector<int> lloyd(const std::vector<double>& X, int n, int dim, int M,
                       std::mt19937_64& rng, std::vector<double>& centroids,
                       std::vector<double>* sse_trace) {
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int k = 0; k < M; ++k) {
    std::uniform_int_distribution<int> pick(k, n - 1);
    std::swap(order[static_cast<size_t>(k)], order[static_cast<size_t>(pick(rng))]);
  }
  centroids.assign(static_cast<size_t>(M) * dim, 0.0);
  for (int k = 0; k < M; ++k)
    for (int j = 0; j < dim; ++j)
      centroids[static_cast<size_t>(k) * dim + j] =
          X[static_cast<size_t>(order[static_cast<size_t>(k)]) * dim + j];

  std::vector<int> assign(static_cast<size_t>(n), -1);
  std::vector<int> counts(static_cast<size_t>(M), 0);
  const int max_iters = 100;
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    double sse = 0;
    counts.assign(static_cast<size_t>(M), 0);
    for (int i = 0; i < n; ++i) {
      const double* x = &X[static_cast<size_t>(i) * dim];
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int k = 0; k < M; ++k) {
        const double* c = &centroids[static_cast<size_t>(k) * dim];
        double d = 0;
        for (int j = 0; j < dim; ++j) {
          double diff = x[j] - c[j];
          d += diff * diff;
        }
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      if (assign[static_cast<size_t>(i)] != best) {
        assign[static_cast<size_t>(i)] = best;
        changed = true;
      }
      counts[static_cast<size_t>(best)]++;
      sse += best_d;
    }

    for (int k = 0; k < M; ++k) {
      if (counts[static_cast<size_t>(k)] > 0) continue;
      int big = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      int far_i = -1;
      double far_d = -1;
      for (int i = 0; i < n; ++i) {
        if (assign[static_cast<size_t>(i)] != big) continue;
        const double* x = &X[static_cast<size_t>(i) * dim];
        const double* c = &centroids[static_cast<size_t>(big) * dim];
        double d = 0;
        for (int j = 0; j < dim; ++j) {
          double diff = x[j] - c[j];
          d += diff * diff;
        }
        if (d > far_d) {
          far_d = d;
          far_i = i;
        }
      }
      assign[static_cast<size_t>(far_i)] = k;
      counts[static_cast<size_t>(k)] = 1;
      counts[static_cast<size_t>(big)]--;
      for (int j = 0; j < dim; ++j)
        centroids[static_cast<size_t>(k) * dim + j] = X[static_cast<size_t>(far_i) * dim + j];
      sse -= far_d;
      changed = true;
    }
    if (sse_trace) sse_trace->push_back(sse);
    if (!changed && it > 0) break;

    centroids.assign(static_cast<size_t>(M) * dim, 0.0);
    for (int i = 0; i < n; ++i) {
      int k = assign[static_cast<size_t>(i)];
      for (int j = 0; j < dim; ++j)
        centroids[static_cast<size_t>(k) * dim + j] += X[static_cast<size_t>(i) * dim + j];
    }
    for (int k = 0; k < M; ++k)
      for (int j = 0; j < dim; ++j)
        centroids[static_cast<size_t>(k) * dim + j] /= counts[static_cast<size_t>(k)];
  }
  return assign;
}

}  // namespace

ScenarioLattice build_lattice(const ScenarioModel& model, int nodes_per_stage, int n_gen,
                              std::uint64_t seed,
                              std::vector<std::vector<double>>* sse_trace) {
  if (nodes_per_stage < 1) throw std::invalid_argument("build_lattice: need at least one node");
  if (n_gen < nodes_per_stage)
    throw std::invalid_argument("build_lattice: fewer generation samples than nodes");
  const RouteInstance& inst = model.instance();
  int S = inst.n_stages();

  ScenarioLattice lat;
  lat.nodes_per_stage = nodes_per_stage;
  lat.stages.resize(static_cast<size_t>(S));
  lat.max_door_open_s.assign(static_cast<size_t>(S), 0.0);

  {
    std::mt19937_64 rng(0);
    StageXi root = model.sample_stage(1, rng);
    StageLattice& st = lat.stages[0];
    st.coord_scale.assign(root.coords().size(), 1.0);
    st.nodes.push_back({std::move(root), 1.0});
  }

  for (int s = 2; s <= S; ++s) {
    std::mt19937_64 rng(split_seed(seed, static_cast<std::uint64_t>(s)));
    int dim = static_cast<int>(inst.loaded_at_stage(s).size()) + 1;
    std::vector<double> X(static_cast<size_t>(n_gen) * dim);
    double max_door = 0;
    for (int i = 0; i < n_gen; ++i) {
      StageXi xi = model.sample_stage(s, rng);
      std::vector<double> c = xi.coords();
      std::copy(c.begin(), c.end(), X.begin() + static_cast<size_t>(i) * dim);
      max_door = std::max(max_door, xi.door_open_s);
    }
    lat.max_door_open_s[static_cast<size_t>(s - 1)] = max_door;

    std::vector<double> scale(static_cast<size_t>(dim), 1.0);
    for (int j = 0; j < dim; ++j) {
      double mean = 0, sq = 0;
      for (int i = 0; i < n_gen; ++i) mean += X[static_cast<size_t>(i) * dim + j];
      mean /= n_gen;
      for (int i = 0; i < n_gen; ++i) {
        double d = X[static_cast<size_t>(i) * dim + j] - mean;
        sq += d * d;
      }
      double sd = std::sqrt(sq / n_gen);
      if (sd > 1e-12 * std::max(1.0, std::abs(mean))) scale[static_cast<size_t>(j)] = sd;
    }
    for (int i = 0; i < n_gen; ++i)
      for (int j = 0; j < dim; ++j) X[static_cast<size_t>(i) * dim + j] /= scale[static_cast<size_t>(j)];

    std::vector<double> centroids;
    std::vector<double>* trace = nullptr;
    if (sse_trace) {
      sse_trace->emplace_back();
      trace = &sse_trace->back();
    }
    std::vector<int> assign = lloyd(X, n_gen, dim, nodes_per_stage, rng, centroids, trace);

    std::vector<int> counts(static_cast<size_t>(nodes_per_stage), 0);
    for (int a : assign) counts[static_cast<size_t>(a)]++;
    StageLattice& st = lat.stages[static_cast<size_t>(s - 1)];
    st.coord_scale = scale;
    for (int k = 0; k < nodes_per_stage; ++k) {
      StageXi xi;
      xi.door_open_s = centroids[static_cast<size_t>(k) * dim] * scale[0];
      for (int j = 1; j < dim; ++j)
        xi.loaded_temps_K.push_back(centroids[static_cast<size_t>(k) * dim + j] *
                                    scale[static_cast<size_t>(j)]);
      st.nodes.push_back({std::move(xi), static_cast<double>(counts[static_cast<size_t>(k)]) / n_gen});
    }
  }

  lat.handling_slots = handling_slot_counts(inst, lat.max_door_open_s);
  return lat;
}

std::string lattice_to_json(const ScenarioLattice& lat) {
  ordered_json j;
  j["nodes_per_stage"] = lat.nodes_per_stage;
  j["max_door_open_s"] = lat.max_door_open_s;
  j["handling_slots"] = lat.handling_slots;
  ordered_json stages = ordered_json::array();
  for (const StageLattice& st : lat.stages) {
    ordered_json js;
    js["coord_scale"] = st.coord_scale;
    ordered_json nodes = ordered_json::array();
    for (const LatticeNode& n : st.nodes) {
      ordered_json jn;
      jn["prob"] = n.prob;
      jn["door_open_s"] = n.xi.door_open_s;
      jn["loaded_temps_K"] = n.xi.loaded_temps_K;
      nodes.push_back(std::move(jn));
    }
    js["nodes"] = std::move(nodes);
    stages.push_back(std::move(js));
  }
  j["stages"] = std::move(stages);
  return j.dump(2) + "\n";
}

ScenarioLattice lattice_from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  ScenarioLattice lat;
  lat.nodes_per_stage = j.at("nodes_per_stage").get<int>();
  lat.max_door_open_s = j.at("max_door_open_s").get<std::vector<double>>();
  lat.handling_slots = j.at("handling_slots").get<std::vector<int>>();
  for (const ordered_json& js : j.at("stages")) {
    StageLattice st;
    st.coord_scale = js.at("coord_scale").get<std::vector<double>>();
    for (const ordered_json& jn : js.at("nodes")) {
      LatticeNode n;
      n.prob = jn.at("prob").get<double>();
      n.xi.door_open_s = jn.at("door_open_s").get<double>();
      n.xi.loaded_temps_K = jn.at("loaded_temps_K").get<std::vector<double>>();
      st.nodes.push_back(std::move(n));
    }
    lat.stages.push_back(std::move(st));
  }
  return lat;
}

ScenarioLattice load_lattice(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lattice: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return lattice_from_json(ss.str());
}

std::string scenarios_to_csv(const std::vector<ScenarioPath>& paths) {
  size_t width = 0;
  for (const ScenarioPath& p : paths)
    for (const std::vector<double>& t : p.loaded_temps_K) width = std::max(width, t.size());
  std::vector<std::string> header{"sample", "stage", "O_s_seconds"};
  for (size_t k = 0; k < width; ++k) header.push_back("temp_K_" + std::to_string(k + 1));
  csv::Writer w(header);
  for (size_t i = 0; i < paths.size(); ++i) {
    const ScenarioPath& p = paths[i];
    for (int s = 1; s <= p.n_stages(); ++s) {
      std::vector<std::string> row{std::to_string(i), std::to_string(s),
                                   csv::format_double(p.door_open_s[static_cast<size_t>(s - 1)])};
      const std::vector<double>& temps = p.loaded_temps_K[static_cast<size_t>(s - 1)];
      for (size_t k = 0; k < width; ++k)
        row.push_back(k < temps.size() ? csv::format_double(temps[k]) : "");
      w.add_row(row);
    }
  }
  return w.str();
}

std::vector<ScenarioPath> scenarios_from_csv(const std::string& text) {
  csv::Table t = csv::parse(text);
  if (t.header.size() < 3 || t.header[0] != "sample" || t.header[1] != "stage" ||
      t.header[2] != "O_s_seconds")
    throw std::invalid_argument("scenario csv: unexpected header");
  std::vector<ScenarioPath> paths;
  for (const std::vector<std::string>& row : t.rows) {
    size_t sample = std::stoul(row.at(0));
    int stage = std::stoi(row.at(1));
    if (sample >= paths.size()) paths.resize(sample + 1);
    ScenarioPath& p = paths[sample];
    if (static_cast<int>(p.door_open_s.size()) < stage) {
      p.door_open_s.resize(static_cast<size_t>(stage), 0.0);
      p.loaded_temps_K.resize(static_cast<size_t>(stage));
    }
    p.door_open_s[static_cast<size_t>(stage - 1)] = std::stod(row.at(2));
    std::vector<double> temps;
    for (size_t k = 3; k < row.size(); ++k)
      if (!row[k].empty()) temps.push_back(std::stod(row[k]));
    p.loaded_temps_K[static_cast<size_t>(stage - 1)] = std::move(temps);
  }
  return paths;
}

AutocorrEstimate residual_autocorrelation(const std::vector<double>& residuals) {
  size_t n = residuals.size();
  if (n < 4) throw std::invalid_argument("residual_autocorrelation: need at least 3 lag pairs");
  size_t m = n - 1;
  double mx = 0, my = 0;
  for (size_t t = 0; t < m; ++t) {
    mx += residuals[t];
    my += residuals[t + 1];
  }
  mx /= static_cast<double>(m);
  my /= static_cast<double>(m);
  double sxx = 0, sxy = 0;
  for (size_t t = 0; t < m; ++t) {
    double dx = residuals[t] - mx;
    sxx += dx * dx;
    sxy += dx * (residuals[t + 1] - my);
  }
  if (sxx <= 0)
    throw std::invalid_argument("residual_autocorrelation: constant lagged series");
  AutocorrEstimate est;
  est.slope = sxy / sxx;
  double intercept = my - est.slope * mx;
  double rss = 0;
  for (size_t t = 0; t < m; ++t) {
    double r = residuals[t + 1] - intercept - est.slope * residuals[t];
    rss += r * r;
  }
  double se = m > 2 ? std::sqrt(rss / static_cast<double>(m - 2) / sxx) : 0.0;
  const double z99 = 2.5758293035489004;
  est.lo = est.slope - z99 * se;
  est.hi = est.slope + z99 * se;
  return est;
}

}  // namespace coldchain
