#include "coldchain/instance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace coldchain {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw std::invalid_argument(where + ": " + what);
}

const json& require(const json& j, const char* key, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) fail(ctx + "." + key, "missing field");
  return *it;
}

double require_num(const json& j, const char* key, const std::string& ctx) {
  const json& v = require(j, key, ctx);
  if (!v.is_number()) fail(ctx + "." + key, "expected a number");
  return v.get<double>();
}

int require_int(const json& j, const char* key, const std::string& ctx) {
  const json& v = require(j, key, ctx);
  if (!v.is_number_integer()) fail(ctx + "." + key, "expected an integer");
  return v.get<int>();
}

std::string require_str(const json& j, const char* key, const std::string& ctx) {
  const json& v = require(j, key, ctx);
  if (!v.is_string()) fail(ctx + "." + key, "expected a string");
  return v.get<std::string>();
}

void check_positive(double v, const std::string& field) {
  if (!(v > 0) || !std::isfinite(v)) fail(field, "must be strictly positive");
}

}  // namespace

int RouteInstance::depot_pallet_count() const {
  int n = 0;
  for (const Pallet& p : pallets) n += (p.load_stop == 0);
  return n;
}

double RouteInstance::nominal_duration_hours() const {
  double minutes = 0;
  for (const Stop& st : stops) minutes += st.drive_minutes;
  for (double m : meta.nominal_stop_minutes) minutes += m;
  return minutes / 60.0;
}

std::vector<int> RouteInstance::cargo_driving(int s) const {
  std::vector<int> ids;
  for (const Pallet& p : pallets)
    if (p.load_stop <= s - 1 && p.destination_stop >= s) ids.push_back(p.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<int> RouteInstance::cargo_handling(int s) const {
  std::vector<int> ids;
  if (s < 2) return ids;
  for (const Pallet& p : pallets)
    if (p.load_stop <= s - 2 && p.destination_stop >= s) ids.push_back(p.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<int> RouteInstance::loaded_at_stage(int s) const {
  std::vector<int> ids;
  for (const Pallet& p : pallets)
    if (p.load_stop == s - 1) ids.push_back(p.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

double RouteInstance::beta_sum(const std::vector<int>& pallet_ids) const {
  double b = 0;
  for (int id : pallet_ids) b += pallet_class(id).beta();
  return b;
}

double RouteInstance::handling_ext_temp_K(int s) const {
  if (s < 2 || s > n_stages()) fail("stage", "handling phase exists for stages 2..S only");
  const Stop& prior = stop(s - 1);
  return prior.ext_temps_K.back();
}

void RouteInstance::validate() const {
  const int S = n_stops();
  if (S < 1) fail("stops", "route needs at least one stop");
  if (classes.empty()) fail("classes", "at least one product class required");

  check_positive(thermo.wall_U_W_per_m2K, "thermo.wall_U_W_per_m2K");
  check_positive(thermo.wall_area_closed_m2, "thermo.wall_area_closed_m2");
  check_positive(thermo.wall_area_open_m2, "thermo.wall_area_open_m2");
  check_positive(thermo.infiltration_kg_per_s, "thermo.infiltration_kg_per_s");
  check_positive(thermo.air_specific_heat_J_per_kgK, "thermo.air_specific_heat_J_per_kgK");
  check_positive(thermo.air_heat_capacity_J_per_K, "thermo.air_heat_capacity_J_per_K");
  check_positive(thermo.evaporator_coupling_W_per_K, "thermo.evaporator_coupling_W_per_K");
  check_positive(thermo.power_cap_W, "thermo.power_cap_W");
  check_positive(thermo.fuel_energy_J_per_L, "thermo.fuel_energy_J_per_L");

  for (size_t c = 0; c < classes.size(); ++c) {
    const std::string ctx = "classes[" + std::to_string(c) + "]";
    const ProductClass& pc = classes[c];
    check_positive(pc.surface_coeff_W_per_m2K, ctx + ".surface_coeff_W_per_m2K");
    check_positive(pc.pallet_area_m2, ctx + ".pallet_area_m2");
    check_positive(pc.heat_capacity_J_per_K, ctx + ".heat_capacity_J_per_K");
    if (!(pc.temp_min_K < pc.temp_max_K))
      fail(ctx + ".temp_min_K", "temperature band is empty (temp_min_K >= temp_max_K)");
    if (!(thermo.fluid_floor_K < pc.temp_min_K))
      fail("thermo.fluid_floor_K", "must lie below every class temp_min_K");
  }

  for (size_t i = 0; i < pallets.size(); ++i) {
    const std::string ctx = "pallets[" + std::to_string(i) + "]";
    const Pallet& p = pallets[i];
    if (p.id != static_cast<int>(i)) fail(ctx + ".id", "pallet ids must equal their array position");
    if (p.class_index < 0 || p.class_index >= static_cast<int>(classes.size()))
      fail(ctx + ".class", "unknown product class");
    if (p.load_stop < 0 || p.load_stop >= p.destination_stop || p.destination_stop > S)
      fail(ctx + ".load_stop", "need 0 <= load_stop < destination_stop <= number of stops");
  }

  for (int k = 1; k <= S; ++k) {
    const Stop& st = stop(k);
    const std::string ctx = "stops[" + std::to_string(k - 1) + "]";
    if (st.drive_minutes < 1) fail(ctx + ".drive_minutes", "must be >= 1");
    if (static_cast<int>(st.ext_temps_K.size()) != st.drive_minutes)
      fail(ctx + ".ext_temp_series_K", "needs exactly one value per driving minute");
    for (double t : st.ext_temps_K)
      if (!(t > 180.0 && t < 360.0)) fail(ctx + ".ext_temp_series_K", "value outside plausible Kelvin range");

    std::set<int> want_in, want_out;
    for (const Pallet& p : pallets) {
      if (p.load_stop == k) want_in.insert(p.id);
      if (p.destination_stop == k) want_out.insert(p.id);
    }
    std::set<int> got_in(st.pallets_in.begin(), st.pallets_in.end());
    std::set<int> got_out(st.pallets_out.begin(), st.pallets_out.end());
    if (got_in != want_in) fail(ctx + ".pallets_in", "does not match pallet load_stop fields");
    if (got_out != want_out) fail(ctx + ".pallets_out", "does not match pallet destination_stop fields");
  }

  if (!meta.nominal_stop_minutes.empty() &&
      static_cast<int>(meta.nominal_stop_minutes.size()) != S - 1)
    fail("meta.nominal_stop_minutes", "expected one value per intermediate stop (S-1)");
  for (double m : meta.nominal_stop_minutes)
    if (!(m > 0)) fail("meta.nominal_stop_minutes", "values must be positive");

  if (!(initial_air_temp_K > 180.0 && initial_air_temp_K < 360.0))
    fail("initial_air_temp_K", "outside plausible Kelvin range");
  check_positive(delta_drive_s, "delta_drive_s");

  // Forward-Euler monotonicity with doors closed: the driving slot length is
  // fixed by the instance, so this can and must hold at load time.
  const double alpha_closed = thermo.wall_U_W_per_m2K * thermo.wall_area_closed_m2;
  double worst = 0;
  for (int s = 1; s <= S; ++s) worst = std::max(worst, beta_sum(cargo_driving(s)));
  const double factor = delta_drive_s *
                        (alpha_closed + worst + thermo.evaporator_coupling_W_per_K) /
                        thermo.air_heat_capacity_J_per_K;
  if (factor > 1.0)
    fail("delta_drive_s", "driving slot too long for stable air dynamics (factor " +
                              std::to_string(factor) + " > 1)");
}

namespace {

RouteInstance from_json(const json& j, const std::string& origin) {
  RouteInstance inst;
  const std::string ctx = origin;

  const json& meta = require(j, "meta", ctx);
  inst.meta.name = require_str(meta, "name", ctx + ".meta");
  if (meta.contains("nominal_stop_minutes"))
    inst.meta.nominal_stop_minutes = meta["nominal_stop_minutes"].get<std::vector<double>>();

  const json& th = require(j, "thermo", ctx);
  const std::string tctx = ctx + ".thermo";
  inst.thermo.wall_U_W_per_m2K = require_num(th, "wall_U_W_per_m2K", tctx);
  inst.thermo.wall_area_closed_m2 = require_num(th, "wall_area_closed_m2", tctx);
  inst.thermo.wall_area_open_m2 = require_num(th, "wall_area_open_m2", tctx);
  inst.thermo.infiltration_kg_per_s = require_num(th, "infiltration_kg_per_s", tctx);
  inst.thermo.air_specific_heat_J_per_kgK = require_num(th, "air_specific_heat_J_per_kgK", tctx);
  inst.thermo.air_heat_capacity_J_per_K = require_num(th, "air_heat_capacity_J_per_K", tctx);
  inst.thermo.evaporator_coupling_W_per_K = require_num(th, "evaporator_coupling_W_per_K", tctx);
  inst.thermo.power_cap_W = require_num(th, "power_cap_W", tctx);
  inst.thermo.fluid_floor_K = require_num(th, "fluid_floor_K", tctx);
  inst.thermo.fuel_energy_J_per_L = require_num(th, "fuel_energy_J_per_L", tctx);

  const json& cls = require(j, "classes", ctx);
  if (!cls.is_array() || cls.empty()) fail(ctx + ".classes", "expected a non-empty array");
  for (size_t c = 0; c < cls.size(); ++c) {
    const std::string cctx = ctx + ".classes[" + std::to_string(c) + "]";
    ProductClass pc;
    pc.name = require_str(cls[c], "name", cctx);
    pc.surface_coeff_W_per_m2K = require_num(cls[c], "surface_coeff_W_per_m2K", cctx);
    pc.pallet_area_m2 = require_num(cls[c], "pallet_area_m2", cctx);
    pc.heat_capacity_J_per_K = require_num(cls[c], "heat_capacity_J_per_K", cctx);
    pc.temp_min_K = require_num(cls[c], "temp_min_K", cctx);
    pc.temp_max_K = require_num(cls[c], "temp_max_K", cctx);
    inst.classes.push_back(std::move(pc));
  }

  const json& pls = require(j, "pallets", ctx);
  for (size_t i = 0; i < pls.size(); ++i) {
    const std::string pctx = ctx + ".pallets[" + std::to_string(i) + "]";
    Pallet p;
    p.id = require_int(pls[i], "id", pctx);
    const std::string cname = require_str(pls[i], "class", pctx);
    p.class_index = -1;
    for (size_t c = 0; c < inst.classes.size(); ++c)
      if (inst.classes[c].name == cname) p.class_index = static_cast<int>(c);
    if (p.class_index < 0) fail(pctx + ".class", "unknown product class '" + cname + "'");
    p.load_stop = require_int(pls[i], "load_stop", pctx);
    p.destination_stop = require_int(pls[i], "destination_stop", pctx);
    inst.pallets.push_back(p);
  }

  const json& sts = require(j, "stops", ctx);
  if (!sts.is_array() || sts.empty()) fail(ctx + ".stops", "expected a non-empty array");
  for (size_t k = 0; k < sts.size(); ++k) {
    const std::string sctx = ctx + ".stops[" + std::to_string(k) + "]";
    Stop st;
    st.drive_minutes = require_int(sts[k], "drive_minutes", sctx);
    const json& series = require(sts[k], "ext_temp_series_K", sctx);
    if (!series.is_array()) fail(sctx + ".ext_temp_series_K", "expected an array");
    st.ext_temps_K = series.get<std::vector<double>>();
    if (sts[k].contains("pallets_in")) st.pallets_in = sts[k]["pallets_in"].get<std::vector<int>>();
    if (sts[k].contains("pallets_out")) st.pallets_out = sts[k]["pallets_out"].get<std::vector<int>>();
    inst.stops.push_back(std::move(st));
  }

  inst.initial_air_temp_K = require_num(j, "initial_air_temp_K", ctx);
  inst.delta_drive_s = require_num(j, "delta_d_s", ctx);

  inst.validate();
  return inst;
}

}  // namespace

RouteInstance parse_instance_json(const std::string& json_text, const std::string& origin) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(origin, std::string("not valid JSON: ") + e.what());
  }
  return from_json(j, origin);
}

RouteInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(path, "cannot open instance file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_instance_json(buf.str(), path);
}

std::string instance_to_json(const RouteInstance& inst) {
  json j;
  j["meta"]["name"] = inst.meta.name;
  j["meta"]["nominal_stop_minutes"] = inst.meta.nominal_stop_minutes;
  json& th = j["thermo"];
  th["wall_U_W_per_m2K"] = inst.thermo.wall_U_W_per_m2K;
  th["wall_area_closed_m2"] = inst.thermo.wall_area_closed_m2;
  th["wall_area_open_m2"] = inst.thermo.wall_area_open_m2;
  th["infiltration_kg_per_s"] = inst.thermo.infiltration_kg_per_s;
  th["air_specific_heat_J_per_kgK"] = inst.thermo.air_specific_heat_J_per_kgK;
  th["air_heat_capacity_J_per_K"] = inst.thermo.air_heat_capacity_J_per_K;
  th["evaporator_coupling_W_per_K"] = inst.thermo.evaporator_coupling_W_per_K;
  th["power_cap_W"] = inst.thermo.power_cap_W;
  th["fluid_floor_K"] = inst.thermo.fluid_floor_K;
  th["fuel_energy_J_per_L"] = inst.thermo.fuel_energy_J_per_L;
  j["classes"] = json::array();
  for (const ProductClass& pc : inst.classes) {
    json c;
    c["name"] = pc.name;
    c["surface_coeff_W_per_m2K"] = pc.surface_coeff_W_per_m2K;
    c["pallet_area_m2"] = pc.pallet_area_m2;
    c["heat_capacity_J_per_K"] = pc.heat_capacity_J_per_K;
    c["temp_min_K"] = pc.temp_min_K;
    c["temp_max_K"] = pc.temp_max_K;
    j["classes"].push_back(c);
  }
  j["pallets"] = json::array();
  for (const Pallet& p : inst.pallets) {
    json e;
    e["id"] = p.id;
    e["class"] = inst.classes.at(static_cast<size_t>(p.class_index)).name;
    e["load_stop"] = p.load_stop;
    e["destination_stop"] = p.destination_stop;
    j["pallets"].push_back(e);
  }
  j["stops"] = json::array();
  for (const Stop& st : inst.stops) {
    json e;
    e["drive_minutes"] = st.drive_minutes;
    e["ext_temp_series_K"] = st.ext_temps_K;
    e["pallets_in"] = st.pallets_in;
    e["pallets_out"] = st.pallets_out;
    j["stops"].push_back(e);
  }
  j["initial_air_temp_K"] = inst.initial_air_temp_K;
  j["delta_d_s"] = inst.delta_drive_s;
  return j.dump(2) + "\n";
}

TimeGrid::TimeGrid(const RouteInstance& inst, std::vector<int> handling_slots) {
  const int S = inst.n_stages();
  if (static_cast<int>(handling_slots.size()) != S)
    throw std::invalid_argument("TimeGrid: handling_slots needs one entry per stage");
  if (handling_slots[0] != 0)
    throw std::invalid_argument("TimeGrid: stage 1 has no handling phase");
  delta_drive_s_ = inst.delta_drive_s;

  const double alpha_open =
      inst.thermo.wall_U_W_per_m2K * inst.thermo.wall_area_open_m2 +
      inst.thermo.infiltration_kg_per_s * inst.thermo.air_specific_heat_J_per_kgK;

  int begin = 0;
  for (int s = 1; s <= S; ++s) {
    const int h = handling_slots[static_cast<size_t>(s - 1)];
    if (h < 0 || (s == 1 && h != 0))
      throw std::invalid_argument("TimeGrid: invalid handling slot count at stage " + std::to_string(s));
    StageSpan span;
    span.begin = begin;
    span.handling = h;
    span.driving = inst.stop(s).drive_minutes;
    stage_.push_back(span);

    const double hext = s >= 2 ? inst.handling_ext_temp_K(s) : 0.0;
    for (int k = 0; k < h; ++k) ext_K_.push_back(hext);
    for (int k = 0; k < span.driving; ++k)
      ext_K_.push_back(inst.stop(s).ext_temps_K[static_cast<size_t>(k)]);

    const double beta_open = inst.beta_sum(inst.cargo_handling(s));
    max_handling_dt_.push_back(inst.thermo.air_heat_capacity_J_per_K / (alpha_open + beta_open));

    begin += span.handling + span.driving;
  }
  total_intervals_ = begin;
}

int TimeGrid::stage_of_interval(int i) const {
  if (i < 0 || i >= total_intervals_) throw std::out_of_range("TimeGrid: interval out of range");
  int lo = 0, hi = n_stages() - 1;
  while (lo < hi) {
    int mid = (lo + hi + 1) / 2;
    if (stage_[static_cast<size_t>(mid)].begin <= i) lo = mid; else hi = mid - 1;
  }
  return lo + 1;
}

std::vector<int> handling_slot_counts(const RouteInstance& inst,
                                      const std::vector<double>& max_door_open_s) {
  const int S = inst.n_stages();
  if (static_cast<int>(max_door_open_s.size()) != S)
    throw std::invalid_argument("handling_slot_counts: one max door-open time per stage");
  const double alpha_open =
      inst.thermo.wall_U_W_per_m2K * inst.thermo.wall_area_open_m2 +
      inst.thermo.infiltration_kg_per_s * inst.thermo.air_specific_heat_J_per_kgK;

  std::vector<int> counts(static_cast<size_t>(S), 0);
  for (int s = 2; s <= S; ++s) {
    const double omax = max_door_open_s[static_cast<size_t>(s - 1)];
    if (omax <= 0) continue;
    const double beta_open = inst.beta_sum(inst.cargo_handling(s));
    // Slots at most one minute long, and short enough that the open-door air
    // update stays a contraction for the longest door time we plan for.
    const double dt_stable = inst.thermo.air_heat_capacity_J_per_K / (alpha_open + beta_open);
    const double dt_cap = std::min(60.0, dt_stable);
    counts[static_cast<size_t>(s - 1)] = static_cast<int>(std::ceil(omax / dt_cap - 1e-12));
  }
  return counts;
}

std::vector<double> handling_slot_durations(const TimeGrid& grid, int s, double door_open_s) {
  const int h = grid.handling_slots(s);
  if (h == 0) {
    if (door_open_s != 0)
      throw std::invalid_argument("handling_slot_durations: stage has no handling phase but door_open_s != 0");
    return {};
  }
  if (!(door_open_s > 0))
    throw std::invalid_argument("handling_slot_durations: door_open_s must be positive");
  return std::vector<double>(static_cast<size_t>(h), door_open_s / h);
}

std::vector<int> cargo_at(const RouteInstance& inst, const TimeGrid& grid, int interval) {
  const int s = grid.stage_of_interval(interval);
  return grid.phase_of_interval(interval) == Phase::Handling ? inst.cargo_handling(s)
                                                             : inst.cargo_driving(s);
}

}  // namespace coldchain
