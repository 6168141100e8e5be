#include "coldchain/stage_lp.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

#include "coldchain/thermo.hpp"

namespace coldchain {

StageLpBuilder::StageLpBuilder(const RouteInstance* inst, const TimeGrid* grid,
                               const PowerModels* power)
    : inst_(inst), grid_(grid), power_(power) {}

std::vector<int> StageLpBuilder::boundary_pallets(int stage) const {
  return inst_->cargo_driving(stage);
}

int StageLpBuilder::boundary_dim(int stage, bool with_fuel) const {
  return 1 + static_cast<int>(boundary_pallets(stage).size()) + (with_fuel ? 1 : 0);
}

StageLp StageLpBuilder::build(int stage, const StageXi& xi, const std::vector<Cut>& cuts,
                              const StageLpOptions& opt) const {
  const RouteInstance& inst = *inst_;
  const int S = inst.n_stages();
  const int H = opt.include_handling ? grid_->handling_slots(stage) : 0;
  const int D = grid_->driving_slots(stage);
  const bool theta = opt.with_theta && stage < S;
  const bool terminal_budget = opt.with_fuel && stage == S;

  std::vector<double> dt_hand;
  if (H > 0) dt_hand = handling_slot_durations(*grid_, stage, xi.door_open_s);
  const double dt_drive = grid_->delta_drive_s();
  const ThermoParams& th = inst.thermo;

  std::vector<int> p_hand = opt.include_handling && stage >= 2 ? inst.cargo_handling(stage)
                                                               : std::vector<int>{};
  std::vector<int> p_drv = inst.cargo_driving(stage);
  std::vector<int> loaded = opt.include_handling ? inst.loaded_at_stage(stage) : std::vector<int>{};
  std::vector<int> p_in;
  if (opt.include_handling) {
    p_in = stage >= 2 ? inst.cargo_driving(stage - 1) : std::vector<int>{};
  } else {
    p_in = p_drv;
  }
  if (opt.include_handling && !loaded.empty() &&
      loaded.size() != xi.loaded_temps_K.size())
    throw std::invalid_argument("stage lp: xi temperature count mismatch");

  StageLp out;
  lp::Model& m = out.model;
  const double kInf = lp::kInf;

  // Pallet activity spans over points t = 0..H+D.
  auto first_point = [&](int p) {
    if (!opt.include_handling) return 0;
    if (stage == 1) return 0;
    return inst.pallets[static_cast<size_t>(p)].load_stop == stage - 1 ? H : 0;
  };
  auto last_point = [&](int p) {
    bool survives = inst.pallets[static_cast<size_t>(p)].destination_stop >= stage;
    return survives ? H + D : 0;  // removed pallets exist at the boundary only
  };

  // Columns. Pinned copies first, then temperatures, then controls, then
  // violations, then fuel, theta, mu.
  const int T = H + D;
  std::vector<int> air(static_cast<size_t>(T + 1), -1);
  std::unordered_map<int, std::vector<int>> temp;  // pallet id -> per point column
  std::vector<int> active;                         // union of pallets with any column
  {
    std::vector<int> ids = p_in;
    for (int p : p_drv)
      if (std::find(ids.begin(), ids.end(), p) == ids.end()) ids.push_back(p);
    std::sort(ids.begin(), ids.end());
    active = ids;
  }
  for (size_t k = 0; k < active.size(); ++k)
    temp[active[k]] = std::vector<int>(static_cast<size_t>(T + 1), -1);

  for (int t = 0; t <= T; ++t) air[static_cast<size_t>(t)] = m.add_col(0, -kInf, kInf);
  for (int p : active) {
    int a = first_point(p), b = last_point(p);
    for (int t = a; t <= b; ++t) temp[p][static_cast<size_t>(t)] = m.add_col(0, -kInf, kInf);
  }
  out.tcu_cols.resize(static_cast<size_t>(D));
  out.w_cols.resize(static_cast<size_t>(D));
  for (int d = 0; d < D; ++d) {
    out.tcu_cols[static_cast<size_t>(d)] = m.add_col(0, th.fluid_floor_K, kInf);
    out.w_cols[static_cast<size_t>(d)] = m.add_col(0, 0, th.power_cap_W);
  }
  // Violation columns, interval-major: handling intervals over p_hand, then
  // driving intervals over p_drv.
  std::vector<std::vector<int>> nu_hand(static_cast<size_t>(H)), nu_drv(static_cast<size_t>(D));
  for (int t = 0; t < H; ++t) {
    double w = dt_hand[static_cast<size_t>(t)] / 60.0;
    for (size_t k = 0; k < p_hand.size(); ++k)
      nu_hand[static_cast<size_t>(t)].push_back(m.add_col(w, 0, kInf));
  }
  for (int d = 0; d < D; ++d) {
    double w = dt_drive / 60.0;
    for (size_t k = 0; k < p_drv.size(); ++k)
      nu_drv[static_cast<size_t>(d)].push_back(m.add_col(w, 0, kInf));
  }
  int fuel_in = -1;
  if (opt.with_fuel) {
    fuel_in = m.add_col(0, 0, kInf);
    out.fuel_end_col = m.add_col(0, 0, kInf);
  }
  if (theta) out.theta_col = m.add_col(1.0, 0, kInf);
  if (terminal_budget) out.mu_col = m.add_col(opt.mu_penalty_per_L, 0, kInf);

  // Pin rows for the incoming state.
  out.state_rows.push_back(m.add_row(lp::Sense::EQ, 0, {{air[0], 1.0}}));
  out.crash_basis.push_back({out.state_rows.back(), air[0]});
  for (int p : p_in) {
    int r = m.add_row(lp::Sense::EQ, 0, {{temp[p][0], 1.0}});
    out.state_rows.push_back(r);
    out.state_pallet_ids.push_back(p);
    out.crash_basis.push_back({r, temp[p][0]});
  }
  if (opt.with_fuel) {
    int r = m.add_row(lp::Sense::EQ, 0, {{fuel_in, 1.0}});
    out.state_rows.push_back(r);
    out.crash_basis.push_back({r, fuel_in});
  }
  // Loaded-temperature pins at the first driving point.
  for (size_t k = 0; k < loaded.size(); ++k) {
    int p = loaded[k];
    int r = m.add_row(lp::Sense::EQ, xi.loaded_temps_K[k], {{temp[p][static_cast<size_t>(H)], 1.0}});
    out.xi_temp_rows.push_back(r);
    out.crash_basis.push_back({r, temp[p][static_cast<size_t>(H)]});
  }

  // Air dynamics.
  for (int t = 0; t < T; ++t) {
    bool handling = t < H;
    double dt = handling ? dt_hand[static_cast<size_t>(t)] : dt_drive;
    double a = alpha(th, handling ? Phase::Handling : Phase::Driving);
    double g = handling ? 0.0 : th.evaporator_coupling_W_per_K;
    double text = handling ? inst.handling_ext_temp_K(stage)
                           : grid_->ext_temp_K(grid_->driving_begin(stage) + (t - H));
    const std::vector<int>& on_board = handling ? p_hand : p_drv;
    double k = dt / th.air_heat_capacity_J_per_K;
    double bsum = inst.beta_sum(on_board);
    std::vector<lp::Entry> ent;
    ent.push_back({air[static_cast<size_t>(t + 1)], 1.0});
    ent.push_back({air[static_cast<size_t>(t)], -(1.0 - k * (a + bsum + g))});
    for (int p : on_board)
      ent.push_back({temp[p][static_cast<size_t>(t)], -k * inst.pallet_class(p).beta()});
    if (!handling) ent.push_back({out.tcu_cols[static_cast<size_t>(t - H)], -k * g});
    int r = m.add_row(lp::Sense::EQ, k * a * text, std::move(ent));
    out.crash_basis.push_back({r, air[static_cast<size_t>(t + 1)]});
  }
  // Pallet dynamics.
  for (int t = 0; t < T; ++t) {
    const std::vector<int>& on_board = t < H ? p_hand : p_drv;
    double dt = t < H ? dt_hand[static_cast<size_t>(t)] : dt_drive;
    for (int p : on_board) {
      const ProductClass& pc = inst.pallet_class(p);
      double kp = dt * pc.beta() / pc.heat_capacity_J_per_K;
      int r = m.add_row(lp::Sense::EQ, 0,
                        {{temp[p][static_cast<size_t>(t + 1)], 1.0},
                         {temp[p][static_cast<size_t>(t)], -(1.0 - kp)},
                         {air[static_cast<size_t>(t)], -kp}});
      out.crash_basis.push_back({r, temp[p][static_cast<size_t>(t + 1)]});
    }
  }
  // Cooling power planes and the no-heating rule per driving slot.
  for (int d = 0; d < D; ++d) {
    double text = grid_->ext_temp_K(grid_->driving_begin(stage) + d);
    const MaxAffineModel& mam = power_->for_ext(text);
    int at = H + d;
    for (size_t k = 0; k < mam.phi0.size(); ++k)
      m.add_row(lp::Sense::GE, mam.phi0[k],
                {{out.w_cols[static_cast<size_t>(d)], 1.0},
                 {out.tcu_cols[static_cast<size_t>(d)], -mam.phi1[k]},
                 {air[static_cast<size_t>(at)], -mam.phi2[k]}});
    m.add_row(lp::Sense::LE, 0,
              {{out.tcu_cols[static_cast<size_t>(d)], 1.0}, {air[static_cast<size_t>(at)], -1.0}});
  }
  // Violation hinges: nu >= T - Tmax, nu >= Tmin - T.
  auto hinge = [&](int nu, int tcol, const ProductClass& pc) {
    m.add_row(lp::Sense::GE, -pc.temp_max_K, {{nu, 1.0}, {tcol, -1.0}});
    m.add_row(lp::Sense::GE, pc.temp_min_K, {{nu, 1.0}, {tcol, 1.0}});
  };
  for (int t = 0; t < H; ++t)
    for (size_t k = 0; k < p_hand.size(); ++k)
      hinge(nu_hand[static_cast<size_t>(t)][k], temp[p_hand[k]][static_cast<size_t>(t)],
            inst.pallet_class(p_hand[k]));
  for (int d = 0; d < D; ++d)
    for (size_t k = 0; k < p_drv.size(); ++k)
      hinge(nu_drv[static_cast<size_t>(d)][k], temp[p_drv[k]][static_cast<size_t>(H + d)],
            inst.pallet_class(p_drv[k]));
  // Fuel chain and terminal budget.
  if (opt.with_fuel) {
    std::vector<lp::Entry> ent{{out.fuel_end_col, 1.0}, {fuel_in, -1.0}};
    for (int d = 0; d < D; ++d)
      ent.push_back({out.w_cols[static_cast<size_t>(d)], -dt_drive / th.fuel_energy_J_per_L});
    int r = m.add_row(lp::Sense::EQ, 0, std::move(ent));
    out.crash_basis.push_back({r, out.fuel_end_col});
    if (terminal_budget)
      m.add_row(lp::Sense::LE, opt.fuel_budget_L,
                {{out.fuel_end_col, 1.0}, {out.mu_col, -1.0}});
  }

  out.end_pallet_ids = p_drv;
  out.end_state_cols.push_back(air[static_cast<size_t>(T)]);
  for (int p : p_drv) out.end_state_cols.push_back(temp[p][static_cast<size_t>(T)]);
  if (opt.with_fuel) out.end_state_cols.push_back(out.fuel_end_col);

  out.n_base_rows = m.n_rows();
  for (const Cut& c : cuts) {
    if (c.stage != stage) throw std::invalid_argument("stage lp: cut for a different stage");
    CutRow cr = cut_row(out, c);
    m.add_row(cr.sense, cr.rhs, cr.entries);
  }
  return out;
}

CutRow StageLpBuilder::cut_row(const StageLp& lp, const Cut& cut) const {
  if (lp.theta_col < 0) throw std::invalid_argument("cut_row: stage has no cost-to-go variable");
  if (cut.gradient.size() != lp.end_state_cols.size())
    throw std::invalid_argument("cut_row: gradient dimension mismatch");
  CutRow row;
  row.rhs = cut.intercept;
  row.entries.push_back({lp.theta_col, 1.0});
  for (size_t j = 0; j < cut.gradient.size(); ++j)
    if (cut.gradient[j] != 0.0) row.entries.push_back({lp.end_state_cols[j], -cut.gradient[j]});
  return row;
}

std::vector<double> StageLpBuilder::state_rhs(const StageLp& lp, double air_K,
                                              const std::vector<double>& pallet_temps_K,
                                              double fuel_L) {
  bool with_fuel = lp.state_rows.size() == lp.state_pallet_ids.size() + 2;
  if (pallet_temps_K.size() != lp.state_pallet_ids.size())
    throw std::invalid_argument("state_rhs: pallet temperature count mismatch");
  std::vector<double> rhs;
  rhs.reserve(lp.state_rows.size());
  rhs.push_back(air_K);
  rhs.insert(rhs.end(), pallet_temps_K.begin(), pallet_temps_K.end());
  if (with_fuel) rhs.push_back(fuel_L);
  return rhs;
}

}  // namespace coldchain
