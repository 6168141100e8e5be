#include "coldchain/sddp.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "coldchain/csv.hpp"
#include "json.hpp"

namespace coldchain {

namespace {

using ordered_json = nlohmann::ordered_json;

double unit_interval(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

int sample_node(const StageLattice& st, std::mt19937_64& rng) {
  const double u = unit_interval(rng());
  double acc = 0;
  for (size_t m = 0; m < st.nodes.size(); ++m) {
    acc += st.nodes[m].prob;
    if (u < acc) return static_cast<int>(m);
  }
  return static_cast<int>(st.nodes.size()) - 1;
}

}  // namespace

const std::vector<Cut>& ValueFunction::at(int s) const {
  if (s < 1 || s > n_stages) throw std::out_of_range("value function: stage out of range");
  return cuts.at(static_cast<size_t>(s));
}

double ValueFunction::value(int s, const std::vector<double>& x) const {
  double best = 0;
  for (const Cut& c : at(s)) {
    if (c.gradient.size() != x.size())
      throw std::invalid_argument("value function: state dimension mismatch");
    double v = c.intercept;
    for (size_t j = 0; j < x.size(); ++j) v += c.gradient[j] * x[j];
    if (v > best) best = v;
  }
  return best;
}

std::string value_function_to_json(const ValueFunction& vf) {
  ordered_json j;
  j["n_stages"] = vf.n_stages;
  j["with_fuel"] = vf.with_fuel;
  ordered_json stages = ordered_json::array();
  for (int s = 1; s <= vf.n_stages; ++s) {
    ordered_json js;
    js["stage"] = s;
    ordered_json arr = ordered_json::array();
    for (const Cut& c : vf.cuts.at(static_cast<size_t>(s))) {
      ordered_json jc;
      jc["intercept"] = c.intercept;
      jc["gradient"] = c.gradient;
      jc["iteration"] = c.iteration;
      arr.push_back(std::move(jc));
    }
    js["cuts"] = std::move(arr);
    stages.push_back(std::move(js));
  }
  j["stages"] = std::move(stages);
  return j.dump(2) + "\n";
}

ValueFunction value_function_from_json(const std::string& text) {
  const ordered_json j = ordered_json::parse(text);
  ValueFunction vf;
  vf.n_stages = j.at("n_stages").get<int>();
  vf.with_fuel = j.at("with_fuel").get<bool>();
  if (vf.n_stages < 1) throw std::invalid_argument("value function: bad stage count");
  vf.cuts.assign(static_cast<size_t>(vf.n_stages) + 1, {});
  for (const auto& js : j.at("stages")) {
    const int s = js.at("stage").get<int>();
    if (s < 1 || s > vf.n_stages) throw std::invalid_argument("value function: stage out of range");
    std::vector<Cut>& pool = vf.cuts[static_cast<size_t>(s)];
    for (const auto& jc : js.at("cuts")) {
      Cut c;
      c.stage = s;
      c.intercept = jc.at("intercept").get<double>();
      c.gradient = jc.at("gradient").get<std::vector<double>>();
      c.iteration = jc.at("iteration").get<int>();
      pool.push_back(std::move(c));
    }
  }
  return vf;
}

ValueFunction load_value_function(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open value function file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return value_function_from_json(ss.str());
}

std::string train_report_to_csv(const TrainReport& r) {
  csv::Writer w({"iteration", "lower_bound_K_min", "forward_cost_K_min"});
  for (size_t i = 0; i < r.lower_bound_K_min.size(); ++i)
    w.add_row({csv::Writer::cell(static_cast<int>(i) + 1),
               csv::Writer::cell(r.lower_bound_K_min[i]),
               csv::Writer::cell(r.forward_cost_K_min[i])});
  return w.str();
}

struct LatticeSolvers::Impl {
  const StageLpBuilder* builder;
  const ScenarioLattice* lattice;
  StageLpOptions base;

  struct Slot {
    bool built = false;
    StageLp layout;
    std::unique_ptr<lp::Solver> solver;
    size_t cuts_applied = 0;
  };
  std::vector<std::vector<Slot>> slots;  // [stage][node]

  Slot& ensure(int stage, int node) {
    if (stage < 1 || stage > lattice->n_stages())
      throw std::out_of_range("lattice solvers: stage out of range");
    const StageLattice& st = lattice->stage(stage);
    if (node < 0 || node >= static_cast<int>(st.nodes.size()))
      throw std::out_of_range("lattice solvers: node out of range");
    Slot& sl = slots[static_cast<size_t>(stage)][static_cast<size_t>(node)];
    if (!sl.built) {
      sl.layout = builder->build(stage, st.nodes[static_cast<size_t>(node)].xi, {}, base);
      sl.solver = std::make_unique<lp::Solver>(sl.layout.model);
      sl.solver->suggest_basis(sl.layout.crash_basis);
      sl.built = true;
    }
    return sl;
  }
};

LatticeSolvers::LatticeSolvers(const StageLpBuilder* builder, const ScenarioLattice* lattice,
                               StageLpOptions base)
    : impl_(std::make_unique<Impl>()) {
  impl_->builder = builder;
  impl_->lattice = lattice;
  impl_->base = base;
  impl_->slots.resize(static_cast<size_t>(lattice->n_stages()) + 1);
  for (int s = 1; s <= lattice->n_stages(); ++s)
    impl_->slots[static_cast<size_t>(s)].resize(lattice->stage(s).nodes.size());
}

LatticeSolvers::~LatticeSolvers() = default;
LatticeSolvers::LatticeSolvers(LatticeSolvers&&) noexcept = default;
LatticeSolvers& LatticeSolvers::operator=(LatticeSolvers&&) noexcept = default;

const StageLp& LatticeSolvers::layout(int stage, int node) {
  return impl_->ensure(stage, node).layout;
}

const lp::Solution& LatticeSolvers::solve(int stage, int node, const std::vector<double>& state,
                                          const std::vector<std::vector<Cut>>& pools) {
  Impl::Slot& sl = impl_->ensure(stage, node);
  const std::vector<Cut>& pool = pools.at(static_cast<size_t>(stage));
  if (sl.layout.theta_col < 0 && !pool.empty())
    throw std::logic_error("lattice solvers: cuts supplied for a terminal stage");
  for (size_t k = sl.cuts_applied; k < pool.size(); ++k) {
    if (pool[k].stage != stage)
      throw std::invalid_argument("lattice solvers: cut targets a different stage");
    CutRow cr = impl_->builder->cut_row(sl.layout, pool[k]);
    sl.solver->add_row(cr.sense, cr.rhs, std::move(cr.entries));
  }
  sl.cuts_applied = pool.size();
  if (state.size() != sl.layout.state_rows.size())
    throw std::invalid_argument("lattice solvers: state dimension mismatch");
  for (size_t i = 0; i < state.size(); ++i) {
    const int row = sl.layout.state_rows[i];
    if (sl.solver->model().rhs[static_cast<size_t>(row)] != state[i])
      sl.solver->set_rhs(row, state[i]);
  }
  const lp::Solution& sol = sl.solver->solve();
  if (sol.status != lp::Status::Optimal)
    throw std::runtime_error("stage problem not optimal: stage " + std::to_string(stage) +
                             " node " + std::to_string(node) + ", " +
                             lp::status_name(sol.status));
  return sol;
}

TrainResult train(const RouteInstance& inst, const TimeGrid& grid, const PowerModels& power,
                  const ScenarioLattice& lattice, const TrainOptions& opt) {
  const int S = inst.n_stages();
  if (lattice.n_stages() != S || grid.n_stages() != S)
    throw std::invalid_argument("train: stage count mismatch between instance, grid, lattice");
  for (int s = 1; s <= S; ++s)
    if (grid.handling_slots(s) != lattice.handling_slots.at(static_cast<size_t>(s - 1)))
      throw std::invalid_argument("train: grid and lattice disagree on handling slots at stage " +
                                  std::to_string(s));
  if (lattice.stage(1).nodes.size() != 1)
    throw std::invalid_argument("train: stage 1 must hold a single root node");
  if (opt.iterations < 1) throw std::invalid_argument("train: iterations must be positive");

  StageLpBuilder builder(&inst, &grid, &power);
  StageLpOptions base;
  base.include_handling = true;
  base.with_theta = true;
  base.with_fuel = opt.with_fuel;
  base.fuel_budget_L = opt.fuel_budget_L;
  base.mu_penalty_per_L = opt.mu_penalty_per_L;

  LatticeSolvers solvers(&builder, &lattice, base);
  std::vector<std::vector<Cut>> pools(static_cast<size_t>(S) + 1);

  std::vector<double> x0{inst.initial_air_temp_K};
  if (opt.with_fuel) x0.push_back(0.0);

  bool deterministic = true;
  for (int s = 1; s <= S; ++s)
    if (lattice.stage(s).nodes.size() != 1) deterministic = false;

  std::mt19937_64 rng(opt.seed);
  TrainResult out;
  TrainReport& rep = out.report;
  const auto t0 = std::chrono::steady_clock::now();

  for (int iter = 1; iter <= opt.iterations; ++iter) {
    // Forward pass: sample a path, record visited end-of-stage states.
    std::vector<std::vector<double>> visited(static_cast<size_t>(S));
    std::vector<std::vector<double>> tcu(static_cast<size_t>(S));
    std::vector<double> x = x0;
    double fwd = 0;
    for (int s = 1; s <= S; ++s) {
      const int m = s == 1 ? 0 : sample_node(lattice.stage(s), rng);
      const lp::Solution& sol = solvers.solve(s, m, x, pools);
      const StageLp& lay = solvers.layout(s, m);
      const double theta =
          lay.theta_col >= 0 ? sol.x[static_cast<size_t>(lay.theta_col)] : 0.0;
      fwd += sol.objective - theta;
      std::vector<double>& sched = tcu[static_cast<size_t>(s - 1)];
      sched.resize(lay.tcu_cols.size());
      for (size_t d = 0; d < lay.tcu_cols.size(); ++d)
        sched[d] = sol.x[static_cast<size_t>(lay.tcu_cols[d])];
      if (s < S) {
        x.resize(lay.end_state_cols.size());
        for (size_t j = 0; j < lay.end_state_cols.size(); ++j)
          x[j] = sol.x[static_cast<size_t>(lay.end_state_cols[j])];
        visited[static_cast<size_t>(s - 1)] = x;
      }
    }

    // Backward pass: one probability-weighted cut per stage, deepest first.
    for (int s = S - 1; s >= 1; --s) {
      const StageLattice& next = lattice.stage(s + 1);
      const std::vector<double>& xhat = visited[static_cast<size_t>(s - 1)];
      Cut cut;
      cut.stage = s;
      cut.iteration = iter;
      cut.gradient.assign(xhat.size(), 0.0);
      for (size_t m = 0; m < next.nodes.size(); ++m) {
        const lp::Solution& sol = solvers.solve(s + 1, static_cast<int>(m), xhat, pools);
        const StageLp& lay = solvers.layout(s + 1, static_cast<int>(m));
        const double p = next.nodes[m].prob;
        double ydotx = 0;
        for (size_t i = 0; i < lay.state_rows.size(); ++i) {
          const double y = sol.row_dual[static_cast<size_t>(lay.state_rows[i])];
          cut.gradient[i] += p * y;
          ydotx += y * xhat[i];
        }
        cut.intercept += p * (sol.objective - ydotx);
      }
      pools[static_cast<size_t>(s)].push_back(std::move(cut));
    }

    const double lb = solvers.solve(1, 0, x0, pools).objective;
    rep.lower_bound_K_min.push_back(lb);
    rep.forward_cost_K_min.push_back(fwd);
    rep.last_tcu_K = std::move(tcu);
    rep.iterations_run = iter;
    if (deterministic && opt.deterministic_gap > 0 &&
        fwd - lb <= opt.deterministic_gap * std::max(1.0, std::abs(fwd)))
      break;
  }

  rep.train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.value.n_stages = S;
  out.value.with_fuel = opt.with_fuel;
  out.value.cuts = std::move(pools);
  return out;
}

struct StageDecider::Impl {
  const StageLpBuilder* builder;
  StageLpOptions base;

  struct Slot {
    bool built = false;
    StageLp layout;
    std::unique_ptr<lp::Solver> solver;
    size_t cuts_applied = 0;
  };
  std::vector<Slot> slots;  // by stage

  Slot& ensure(int stage) {
    const int S = builder->instance().n_stages();
    if (stage < 1 || stage > S) throw std::out_of_range("stage decider: stage out of range");
    if (slots.empty()) slots.resize(static_cast<size_t>(S) + 1);
    Slot& sl = slots[static_cast<size_t>(stage)];
    if (!sl.built) {
      sl.layout = builder->build(stage, StageXi{}, {}, base);
      sl.solver = std::make_unique<lp::Solver>(sl.layout.model);
      sl.solver->suggest_basis(sl.layout.crash_basis);
      sl.built = true;
    }
    return sl;
  }
};

StageDecider::StageDecider(const StageLpBuilder* builder, StageLpOptions base)
    : impl_(std::make_unique<Impl>()) {
  impl_->builder = builder;
  base.include_handling = false;
  impl_->base = base;
}

StageDecider::~StageDecider() = default;
StageDecider::StageDecider(StageDecider&&) noexcept = default;
StageDecider& StageDecider::operator=(StageDecider&&) noexcept = default;

StageDecision StageDecider::decide(int stage, const std::vector<double>& state,
                                   const std::vector<Cut>& pool) {
  Impl::Slot& sl = impl_->ensure(stage);
  if (sl.layout.theta_col < 0 && !pool.empty())
    throw std::logic_error("stage decider: cuts supplied for a terminal stage");
  for (size_t k = sl.cuts_applied; k < pool.size(); ++k) {
    if (pool[k].stage != stage)
      throw std::invalid_argument("stage decider: cut targets a different stage");
    CutRow cr = impl_->builder->cut_row(sl.layout, pool[k]);
    sl.solver->add_row(cr.sense, cr.rhs, std::move(cr.entries));
  }
  sl.cuts_applied = pool.size();
  if (state.size() != sl.layout.state_rows.size())
    throw std::invalid_argument("stage decider: state dimension mismatch");
  for (size_t i = 0; i < state.size(); ++i) {
    const int row = sl.layout.state_rows[i];
    if (sl.solver->model().rhs[static_cast<size_t>(row)] != state[i])
      sl.solver->set_rhs(row, state[i]);
  }
  const lp::Solution& sol = sl.solver->solve();
  if (sol.status != lp::Status::Optimal)
    throw std::runtime_error("stage decision not optimal: stage " + std::to_string(stage) +
                             ", " + lp::status_name(sol.status));

  StageDecision d;
  d.tcu_K.resize(sl.layout.tcu_cols.size());
  for (size_t k = 0; k < d.tcu_K.size(); ++k)
    d.tcu_K[k] = sol.x[static_cast<size_t>(sl.layout.tcu_cols[k])];
  d.objective_K_min = sol.objective;
  d.theta_K_min =
      sl.layout.theta_col >= 0 ? sol.x[static_cast<size_t>(sl.layout.theta_col)] : 0.0;
  d.immediate_K_min = sol.objective - d.theta_K_min;
  d.mu_L = sl.layout.mu_col >= 0 ? sol.x[static_cast<size_t>(sl.layout.mu_col)] : 0.0;
  d.end_state.resize(sl.layout.end_state_cols.size());
  for (size_t j = 0; j < d.end_state.size(); ++j)
    d.end_state[j] = sol.x[static_cast<size_t>(sl.layout.end_state_cols[j])];
  return d;
}

}  // namespace coldchain
