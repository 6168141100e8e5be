#include "coldchain/lp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

namespace coldchain::lp {

const char* status_name(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::Unbounded: return "unbounded";
    case Status::IterationLimit: return "iteration_limit";
  }
  return "?";
}

int Model::add_col(double obj_coef, double lo_bound, double hi_bound, std::string name) {
  obj.push_back(obj_coef);
  lo.push_back(lo_bound);
  hi.push_back(hi_bound);
  col_name.push_back(std::move(name));
  return n_cols() - 1;
}

int Model::add_row(Sense s, double rhs_value, std::vector<Entry> entries, std::string name) {
  sense.push_back(s);
  rhs.push_back(rhs_value);
  rows.push_back(std::move(entries));
  row_name.push_back(std::move(name));
  return n_rows() - 1;
}

void Model::validate() const {
  for (int j = 0; j < n_cols(); ++j) {
    if (std::isnan(obj[j]) || std::isnan(lo[j]) || std::isnan(hi[j]))
      throw std::invalid_argument("lp::Model: NaN in column " + std::to_string(j));
    if (lo[j] > hi[j])
      throw std::invalid_argument("lp::Model: empty bound interval on column " +
                                  std::to_string(j));
  }
  for (int i = 0; i < n_rows(); ++i) {
    if (std::isnan(rhs[i]))
      throw std::invalid_argument("lp::Model: NaN rhs in row " + std::to_string(i));
    for (const Entry& e : rows[i]) {
      if (e.col < 0 || e.col >= n_cols())
        throw std::invalid_argument("lp::Model: bad column index in row " + std::to_string(i));
      if (!std::isfinite(e.val))
        throw std::invalid_argument("lp::Model: non-finite coefficient in row " +
                                    std::to_string(i));
    }
  }
}

namespace {

enum class VStat : char { AtLower, AtUpper, Basic, FreeNb };

// Product-form update. A pivot eta stores the transformed entering column;
// an append op extends the basis by one row whose slack starts basic, which
// is block-triangular in the prior basis: B_new = diag(B_old, 1) * E with
// E = I + e_pos * r^T, r = new-row coefficients on the then-basic columns.
struct Eta {
  int pos;
  double diag;
  bool append = false;
  std::vector<std::pair<int, double>> off;  // pivot column entries, or r for appends
};

}  // namespace

// All simplex state lives in the scaled space: A_s = R A S, b_s = R b,
// c_s = S c, bounds S^-1 [lo, hi]. Slack columns are unit vectors of the
// scaled system (slack_i = r_i * original slack), so their bounds keep their
// sign pattern. Unscaling happens only when a Solution is extracted.
struct Solver::Impl {
  Model model;
  Options opt;
  Solution sol;

  int nc = 0;  // structural columns
  int nr = 0;  // rows
  int nv() const { return nc + nr; }

  // scaled data
  std::vector<double> row_scale, col_scale;
  std::vector<double> c_s, lo_s, hi_s, b_s;
  // structural columns, CSC
  std::vector<int> col_ptr, row_idx;
  std::vector<double> val;

  // basis
  std::vector<int> basic;         // var per basis position
  std::vector<int> pos_of;        // var -> basis position or -1
  std::vector<VStat> vstat;       // per var
  std::vector<double> x;          // per var, scaled
  std::vector<double> d;          // reduced costs, scaled
  Eigen::VectorXd y;              // row duals, scaled

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  std::vector<Eta> etas;
  int lu_dim = 0;  // rows covered by lu; appended rows live only in etas
  bool factor_valid = false;

  bool initialized = false;
  bool primal_dirty = true;
  bool dual_dirty = true;
  bool bland = false;
  std::vector<std::pair<int, int>> suggested;

  explicit Impl(Model m, Options o) : model(std::move(m)), opt(o) {
    model.validate();
    nc = model.n_cols();
    nr = model.n_rows();
    build_scaling();
    build_columns();
  }

  // ---- scaling -------------------------------------------------------

  void build_scaling() {
    row_scale.assign(static_cast<size_t>(nr), 1.0);
    col_scale.assign(static_cast<size_t>(nc), 1.0);
    if (opt.scale) {
      for (int pass = 0; pass < 2; ++pass) {
        for (int i = 0; i < nr; ++i) {
          double mn = kInf, mx = 0;
          for (const Entry& e : model.rows[i]) {
            const double a = std::abs(e.val) * col_scale[static_cast<size_t>(e.col)] *
                             row_scale[static_cast<size_t>(i)];
            if (a > 0) { mn = std::min(mn, a); mx = std::max(mx, a); }
          }
          if (mx > 0) row_scale[static_cast<size_t>(i)] =
              std::clamp(row_scale[static_cast<size_t>(i)] / std::sqrt(mn * mx), 1e-8, 1e8);
        }
        std::vector<double> cmn(static_cast<size_t>(nc), kInf), cmx(static_cast<size_t>(nc), 0);
        for (int i = 0; i < nr; ++i)
          for (const Entry& e : model.rows[i]) {
            const double a = std::abs(e.val) * col_scale[static_cast<size_t>(e.col)] *
                             row_scale[static_cast<size_t>(i)];
            if (a > 0) {
              cmn[static_cast<size_t>(e.col)] = std::min(cmn[static_cast<size_t>(e.col)], a);
              cmx[static_cast<size_t>(e.col)] = std::max(cmx[static_cast<size_t>(e.col)], a);
            }
          }
        for (int j = 0; j < nc; ++j)
          if (cmx[static_cast<size_t>(j)] > 0)
            col_scale[static_cast<size_t>(j)] = std::clamp(
                col_scale[static_cast<size_t>(j)] /
                    std::sqrt(cmn[static_cast<size_t>(j)] * cmx[static_cast<size_t>(j)]),
                1e-8, 1e8);
      }
    }
    c_s.assign(static_cast<size_t>(nv()), 0.0);
    lo_s.assign(static_cast<size_t>(nv()), 0.0);
    hi_s.assign(static_cast<size_t>(nv()), 0.0);
    b_s.assign(static_cast<size_t>(nr), 0.0);
    for (int j = 0; j < nc; ++j) {
      const double s = col_scale[static_cast<size_t>(j)];
      c_s[static_cast<size_t>(j)] = model.obj[static_cast<size_t>(j)] * s;
      lo_s[static_cast<size_t>(j)] = model.lo[static_cast<size_t>(j)] / s;
      hi_s[static_cast<size_t>(j)] = model.hi[static_cast<size_t>(j)] / s;
    }
    for (int i = 0; i < nr; ++i) {
      b_s[static_cast<size_t>(i)] = model.rhs[static_cast<size_t>(i)] *
                                    row_scale[static_cast<size_t>(i)];
      slack_bounds(i);
    }
  }

  void slack_bounds(int i) {
    const int j = nc + i;
    switch (model.sense[static_cast<size_t>(i)]) {
      case Sense::LE: lo_s[static_cast<size_t>(j)] = 0; hi_s[static_cast<size_t>(j)] = kInf; break;
      case Sense::EQ: lo_s[static_cast<size_t>(j)] = 0; hi_s[static_cast<size_t>(j)] = 0; break;
      case Sense::GE: lo_s[static_cast<size_t>(j)] = -kInf; hi_s[static_cast<size_t>(j)] = 0; break;
    }
    c_s[static_cast<size_t>(nc + i)] = 0;
  }

  void build_columns() {
    std::vector<int> count(static_cast<size_t>(nc), 0);
    size_t nnz = 0;
    for (int i = 0; i < nr; ++i)
      for (const Entry& e : model.rows[i]) {
        ++count[static_cast<size_t>(e.col)];
        ++nnz;
      }
    col_ptr.assign(static_cast<size_t>(nc) + 1, 0);
    for (int j = 0; j < nc; ++j) col_ptr[static_cast<size_t>(j) + 1] =
        col_ptr[static_cast<size_t>(j)] + count[static_cast<size_t>(j)];
    row_idx.assign(nnz, 0);
    val.assign(nnz, 0.0);
    std::vector<int> cursor(col_ptr.begin(), col_ptr.end() - 1);
    for (int i = 0; i < nr; ++i)
      for (const Entry& e : model.rows[i]) {
        const int p = cursor[static_cast<size_t>(e.col)]++;
        row_idx[static_cast<size_t>(p)] = i;
        val[static_cast<size_t>(p)] = e.val * row_scale[static_cast<size_t>(i)] *
                                      col_scale[static_cast<size_t>(e.col)];
      }
  }

  // column j of the scaled [A I] system into a dense work vector
  void scatter_col(int j, Eigen::VectorXd& w) const {
    w.setZero();
    if (j < nc) {
      for (int p = col_ptr[static_cast<size_t>(j)]; p < col_ptr[static_cast<size_t>(j) + 1]; ++p)
        w[row_idx[static_cast<size_t>(p)]] = val[static_cast<size_t>(p)];
    } else {
      w[j - nc] = 1.0;
    }
  }

  double col_dot(int j, const Eigen::VectorXd& v) const {
    if (j >= nc) return v[j - nc];
    double s = 0;
    for (int p = col_ptr[static_cast<size_t>(j)]; p < col_ptr[static_cast<size_t>(j) + 1]; ++p)
      s += val[static_cast<size_t>(p)] * v[row_idx[static_cast<size_t>(p)]];
    return s;
  }

  // ---- factorization -------------------------------------------------

  bool refactor() {
    if (nr == 0) {  // row-free model: nothing to factorize
      etas.clear();
      lu_dim = 0;
      factor_valid = true;
      return true;
    }
    Eigen::SparseMatrix<double> B(nr, nr);
    std::vector<Eigen::Triplet<double>> t;
    for (int p = 0; p < nr; ++p) {
      const int j = basic[static_cast<size_t>(p)];
      if (j < nc) {
        for (int q = col_ptr[static_cast<size_t>(j)]; q < col_ptr[static_cast<size_t>(j) + 1]; ++q)
          t.emplace_back(row_idx[static_cast<size_t>(q)], p, val[static_cast<size_t>(q)]);
      } else {
        t.emplace_back(j - nc, p, 1.0);
      }
    }
    B.setFromTriplets(t.begin(), t.end());
    lu.compute(B);
    etas.clear();
    lu_dim = nr;
    factor_valid = lu.info() == Eigen::Success;
    return factor_valid;
  }

  void ftran(Eigen::VectorXd& w) {
    if (nr == 0) return;
    if (lu_dim == nr) w = lu.solve(w);
    else if (lu_dim > 0) w.head(lu_dim) = lu.solve(w.head(lu_dim).eval());
    for (const Eta& e : etas) {
      if (e.append) {
        double s = 0;
        for (const auto& [i, a] : e.off) s += a * w[i];
        w[e.pos] -= s;
        continue;
      }
      const double t = w[e.pos] / e.diag;
      if (t != 0.0)
        for (const auto& [i, a] : e.off) w[i] -= a * t;
      w[e.pos] = t;
    }
  }

  void btran(Eigen::VectorXd& w) {
    if (nr == 0) return;
    for (auto it = etas.rbegin(); it != etas.rend(); ++it) {
      if (it->append) {
        const double t = w[it->pos];
        if (t != 0.0)
          for (const auto& [i, a] : it->off) w[i] -= a * t;
        continue;
      }
      double s = w[it->pos];
      for (const auto& [i, a] : it->off) s -= a * w[i];
      w[it->pos] = s / it->diag;
    }
    if (lu_dim == nr) w = lu.adjoint().solve(w);
    else if (lu_dim > 0) w.head(lu_dim) = lu.adjoint().solve(w.head(lu_dim).eval());
  }

  void push_eta(int pos, const Eigen::VectorXd& alpha) {
    Eta e;
    e.pos = pos;
    e.diag = alpha[pos];
    for (int i = 0; i < nr; ++i)
      if (i != pos && std::abs(alpha[i]) > 1e-13) e.off.emplace_back(i, alpha[i]);
    etas.push_back(std::move(e));
  }

  // ---- basis state ---------------------------------------------------

  double nb_value(int j) const {
    switch (vstat[static_cast<size_t>(j)]) {
      case VStat::AtLower: return lo_s[static_cast<size_t>(j)];
      case VStat::AtUpper: return hi_s[static_cast<size_t>(j)];
      case VStat::FreeNb: return 0.0;
      case VStat::Basic: break;
    }
    return x[static_cast<size_t>(j)];
  }

  void init_basis() {
    basic.clear();
    pos_of.assign(static_cast<size_t>(nv()), -1);
    vstat.assign(static_cast<size_t>(nv()), VStat::AtLower);
    x.assign(static_cast<size_t>(nv()), 0.0);
    for (int j = 0; j < nv(); ++j) {
      if (std::isfinite(lo_s[static_cast<size_t>(j)])) vstat[static_cast<size_t>(j)] = VStat::AtLower;
      else if (std::isfinite(hi_s[static_cast<size_t>(j)])) vstat[static_cast<size_t>(j)] = VStat::AtUpper;
      else vstat[static_cast<size_t>(j)] = VStat::FreeNb;
      x[static_cast<size_t>(j)] = nb_value(j);
    }
    std::vector<int> row_col(static_cast<size_t>(nr), -1);
    for (const auto& [row, col] : suggested) {
      if (row < 0 || row >= nr || col < 0 || col >= nc) continue;
      row_col[static_cast<size_t>(row)] = col;
    }
    basic.resize(static_cast<size_t>(nr));
    for (int i = 0; i < nr; ++i)
      basic[static_cast<size_t>(i)] = row_col[static_cast<size_t>(i)] >= 0
                                          ? row_col[static_cast<size_t>(i)]
                                          : nc + i;
    mark_basis();
    if (!refactor()) {
      // singular suggestion: fall back to the always-invertible slack basis
      for (int i = 0; i < nr; ++i) basic[static_cast<size_t>(i)] = nc + i;
      mark_basis();
      refactor();
    }
    compute_basics();
    initialized = true;
  }

  void mark_basis() {
    for (int j = 0; j < nv(); ++j)
      if (vstat[static_cast<size_t>(j)] == VStat::Basic)
        vstat[static_cast<size_t>(j)] = std::isfinite(lo_s[static_cast<size_t>(j)])
                                            ? VStat::AtLower
                                            : (std::isfinite(hi_s[static_cast<size_t>(j)])
                                                   ? VStat::AtUpper
                                                   : VStat::FreeNb);
    std::fill(pos_of.begin(), pos_of.end(), -1);
    for (int p = 0; p < nr; ++p) {
      const int j = basic[static_cast<size_t>(p)];
      vstat[static_cast<size_t>(j)] = VStat::Basic;
      pos_of[static_cast<size_t>(j)] = p;
    }
    for (int j = 0; j < nv(); ++j)
      if (vstat[static_cast<size_t>(j)] != VStat::Basic) x[static_cast<size_t>(j)] = nb_value(j);
  }

  void compute_basics() {
    Eigen::VectorXd r(nr);
    for (int i = 0; i < nr; ++i) r[i] = b_s[static_cast<size_t>(i)];
    for (int j = 0; j < nv(); ++j) {
      if (vstat[static_cast<size_t>(j)] == VStat::Basic) continue;
      const double v = x[static_cast<size_t>(j)];
      if (v == 0.0) continue;
      if (j < nc) {
        for (int p = col_ptr[static_cast<size_t>(j)]; p < col_ptr[static_cast<size_t>(j) + 1]; ++p)
          r[row_idx[static_cast<size_t>(p)]] -= val[static_cast<size_t>(p)] * v;
      } else {
        r[j - nc] -= v;
      }
    }
    ftran(r);
    for (int p = 0; p < nr; ++p) x[static_cast<size_t>(basic[static_cast<size_t>(p)])] = r[p];
  }

  // reduced costs for an arbitrary basic-cost vector (phase 1 or real costs)
  void compute_duals(const std::vector<double>& cost) {
    y.resize(nr);
    for (int p = 0; p < nr; ++p) y[p] = cost[static_cast<size_t>(basic[static_cast<size_t>(p)])];
    btran(y);
    d.assign(static_cast<size_t>(nv()), 0.0);
    for (int j = 0; j < nv(); ++j) {
      if (vstat[static_cast<size_t>(j)] == VStat::Basic) continue;
      d[static_cast<size_t>(j)] = cost[static_cast<size_t>(j)] - col_dot(j, y);
    }
  }

  double primal_infeasibility() const {
    double s = 0;
    for (int p = 0; p < nr; ++p) {
      const int j = basic[static_cast<size_t>(p)];
      const double v = x[static_cast<size_t>(j)];
      s += std::max(0.0, lo_s[static_cast<size_t>(j)] - v) +
           std::max(0.0, v - hi_s[static_cast<size_t>(j)]);
    }
    return s;
  }

  bool is_primal_feasible() const {
    for (int p = 0; p < nr; ++p) {
      const int j = basic[static_cast<size_t>(p)];
      const double v = x[static_cast<size_t>(j)];
      if (v < lo_s[static_cast<size_t>(j)] - opt.feas_tol ||
          v > hi_s[static_cast<size_t>(j)] + opt.feas_tol)
        return false;
    }
    return true;
  }

  bool is_dual_feasible() const {
    for (int j = 0; j < nv(); ++j) {
      const double dj = d[static_cast<size_t>(j)];
      switch (vstat[static_cast<size_t>(j)]) {
        case VStat::AtLower:
          if (hi_s[static_cast<size_t>(j)] > lo_s[static_cast<size_t>(j)] && dj < -opt.opt_tol)
            return false;
          break;
        case VStat::AtUpper:
          if (hi_s[static_cast<size_t>(j)] > lo_s[static_cast<size_t>(j)] && dj > opt.opt_tol)
            return false;
          break;
        case VStat::FreeNb:
          if (std::abs(dj) > opt.opt_tol) return false;
          break;
        case VStat::Basic: break;
      }
    }
    return true;
  }

  // ---- primal simplex -------------------------------------------------

  // phase 1 uses piecewise-linear infeasibility costs recomputed around the
  // current basic values; phase 2 uses the real costs
  void phase_costs(std::vector<double>& cost) const {
    cost.assign(static_cast<size_t>(nv()), 0.0);
    for (int p = 0; p < nr; ++p) {
      const int j = basic[static_cast<size_t>(p)];
      const double v = x[static_cast<size_t>(j)];
      if (v < lo_s[static_cast<size_t>(j)] - opt.feas_tol) cost[static_cast<size_t>(j)] = -1;
      else if (v > hi_s[static_cast<size_t>(j)] + opt.feas_tol) cost[static_cast<size_t>(j)] = 1;
    }
  }

  int price_entering() const {
    int best = -1;
    double best_score = 0;
    for (int j = 0; j < nv(); ++j) {
      if (vstat[static_cast<size_t>(j)] == VStat::Basic) continue;
      if (hi_s[static_cast<size_t>(j)] - lo_s[static_cast<size_t>(j)] <= 0 &&
          vstat[static_cast<size_t>(j)] != VStat::FreeNb)
        continue;  // fixed columns never enter
      const double dj = d[static_cast<size_t>(j)];
      double score = 0;
      switch (vstat[static_cast<size_t>(j)]) {
        case VStat::AtLower: if (dj < -opt.opt_tol) score = -dj; break;
        case VStat::AtUpper: if (dj > opt.opt_tol) score = dj; break;
        case VStat::FreeNb: if (std::abs(dj) > opt.opt_tol) score = std::abs(dj); break;
        case VStat::Basic: break;
      }
      if (score > 0) {
        if (bland) return j;  // lowest eligible index
        if (score > best_score) { best_score = score; best = j; }
      }
    }
    return best;
  }

  // one primal iteration; returns false when no entering candidate remains
  enum class StepResult { Moved, OptimalStop, UnboundedStop };

  StepResult primal_step(bool phase1, int& iters) {
    const int q = price_entering();
    if (q < 0) return StepResult::OptimalStop;
    const double dq = d[static_cast<size_t>(q)];
    const int sigma = (vstat[static_cast<size_t>(q)] == VStat::AtUpper ||
                       (vstat[static_cast<size_t>(q)] == VStat::FreeNb && dq > 0))
                          ? -1
                          : 1;

    Eigen::VectorXd alpha(nr);
    scatter_col(q, alpha);
    ftran(alpha);

    // ratio test: basics block at their bounds; in phase 1, violated basics
    // additionally block where they become feasible
    double t_best = hi_s[static_cast<size_t>(q)] - lo_s[static_cast<size_t>(q)];  // own span
    if (!std::isfinite(t_best)) t_best = kInf;
    int r_best = -1;
    double piv_best = 0;
    for (int p = 0; p < nr; ++p) {
      const double a = alpha[p];
      if (std::abs(a) <= opt.pivot_tol) continue;
      const int j = basic[static_cast<size_t>(p)];
      const double delta = sigma * a;  // x_j moves by -delta * t
      const double v = x[static_cast<size_t>(j)];
      const double lo_j = lo_s[static_cast<size_t>(j)], hi_j = hi_s[static_cast<size_t>(j)];
      double t = kInf;
      if (phase1 && v < lo_j - opt.feas_tol) {
        if (delta < 0) t = (v - lo_j) / delta;  // rises until feasible at lo
      } else if (phase1 && v > hi_j + opt.feas_tol) {
        if (delta > 0) t = (v - hi_j) / delta;  // falls until feasible at hi
      } else {
        if (delta > 0 && std::isfinite(lo_j)) t = (v - lo_j) / delta;
        else if (delta < 0 && std::isfinite(hi_j)) t = (v - hi_j) / delta;
      }
      if (t < -opt.feas_tol) t = 0;  // tolerate slight drift
      t = std::max(t, 0.0);
      if (t < t_best - 1e-12 ||
          (t < t_best + 1e-12 &&
           (bland ? (r_best < 0 || j < basic[static_cast<size_t>(r_best)])
                  : std::abs(a) > piv_best))) {
        t_best = t;
        r_best = p;
        piv_best = std::abs(a);
      }
    }

    if (!std::isfinite(t_best)) return StepResult::UnboundedStop;

    ++iters;
    if (r_best < 0) {
      // bound flip: entering runs to its opposite bound
      for (int p = 0; p < nr; ++p)
        if (std::abs(alpha[p]) > 0)
          x[static_cast<size_t>(basic[static_cast<size_t>(p)])] -= sigma * alpha[p] * t_best;
      vstat[static_cast<size_t>(q)] =
          sigma > 0 ? VStat::AtUpper : VStat::AtLower;
      x[static_cast<size_t>(q)] = nb_value(q);
      return StepResult::Moved;
    }

    const int jl = basic[static_cast<size_t>(r_best)];
    const double xq_new = x[static_cast<size_t>(q)] + sigma * t_best;
    for (int p = 0; p < nr; ++p)
      if (alpha[p] != 0.0)
        x[static_cast<size_t>(basic[static_cast<size_t>(p)])] -= sigma * alpha[p] * t_best;
    // leaving variable lands on the bound that blocked
    const double vl = x[static_cast<size_t>(jl)];
    const double snap_lo = std::abs(vl - lo_s[static_cast<size_t>(jl)]);
    const double snap_hi = std::abs(vl - hi_s[static_cast<size_t>(jl)]);
    vstat[static_cast<size_t>(jl)] = snap_lo <= snap_hi ? VStat::AtLower : VStat::AtUpper;
    x[static_cast<size_t>(jl)] = nb_value(jl);
    pos_of[static_cast<size_t>(jl)] = -1;

    basic[static_cast<size_t>(r_best)] = q;
    pos_of[static_cast<size_t>(q)] = r_best;
    vstat[static_cast<size_t>(q)] = VStat::Basic;
    x[static_cast<size_t>(q)] = xq_new;

    push_eta(r_best, alpha);
    if (static_cast<int>(etas.size()) >= opt.refactor_every) {
      refactor();
      compute_basics();
    }
    return StepResult::Moved;
  }

  Status run_primal(int& iters) {
    std::vector<double> cost;
    // phase 1 until feasible
    int stall = 0;
    double last_inf = kInf;
    while (!is_primal_feasible()) {
      if (iters >= opt.max_iters) return Status::IterationLimit;
      phase_costs(cost);
      compute_duals(cost);
      const StepResult sr = primal_step(/*phase1=*/true, iters);
      if (sr == StepResult::OptimalStop) {
        if (primal_infeasibility() <= opt.feas_tol * (1 + std::abs(sum_b())))
          break;  // feasible enough: continue with phase 2
        return Status::Infeasible;
      }
      if (sr == StepResult::UnboundedStop) return Status::Infeasible;  // cannot happen, defensive
      const double inf = primal_infeasibility();
      if (inf < last_inf - 1e-12) { last_inf = inf; stall = 0; bland = false; }
      else if (++stall > 1000) bland = true;
    }
    // phase 2
    stall = 0;
    double last_obj = kInf;
    for (;;) {
      if (iters >= opt.max_iters) return Status::IterationLimit;
      compute_duals(c_s);
      const StepResult sr = primal_step(/*phase1=*/false, iters);
      if (sr == StepResult::OptimalStop) return Status::Optimal;
      if (sr == StepResult::UnboundedStop) return Status::Unbounded;
      const double obj = scaled_obj();
      if (obj < last_obj - 1e-12 * (1 + std::abs(last_obj))) { last_obj = obj; stall = 0; bland = false; }
      else if (++stall > 1000) bland = true;
      if (!is_primal_feasible()) {
        // numerical drift: rebuild and continue
        refactor();
        compute_basics();
        if (!is_primal_feasible()) return run_primal(iters);
      }
    }
  }

  double sum_b() const {
    double s = 0;
    for (double v : b_s) s += std::abs(v);
    return s;
  }

  double scaled_obj() const {
    double s = 0;
    for (int j = 0; j < nv(); ++j) s += c_s[static_cast<size_t>(j)] * x[static_cast<size_t>(j)];
    return s;
  }

  // ---- dual simplex ---------------------------------------------------

  Status run_dual(int& iters) {
    int stall = 0;
    double last_inf = kInf;
    for (;;) {
      if (iters >= opt.max_iters) return Status::IterationLimit;
      // leaving: most violated basic
      int r = -1;
      double viol = opt.feas_tol;
      bool above = false;
      for (int p = 0; p < nr; ++p) {
        const int j = basic[static_cast<size_t>(p)];
        const double v = x[static_cast<size_t>(j)];
        const double below_v = lo_s[static_cast<size_t>(j)] - v;
        const double above_v = v - hi_s[static_cast<size_t>(j)];
        if (bland) {
          if (below_v > opt.feas_tol || above_v > opt.feas_tol) {
            if (r < 0 || j < basic[static_cast<size_t>(r)]) { r = p; above = above_v > below_v; }
          }
        } else if (std::max(below_v, above_v) > viol) {
          viol = std::max(below_v, above_v);
          r = p;
          above = above_v > below_v;
        }
      }
      if (r < 0) return Status::Optimal;  // primal feasible again

      Eigen::VectorXd rho = Eigen::VectorXd::Zero(nr);
      rho[r] = 1.0;
      btran(rho);
      const double dir = above ? 1.0 : -1.0;  // want x_r to move opposite its violation

      // entering: dual ratio test among columns that push x_r the right way
      int q = -1;
      double theta = kInf;
      double wq = 0;
      for (int j = 0; j < nv(); ++j) {
        if (vstat[static_cast<size_t>(j)] == VStat::Basic) continue;
        const bool fixed = hi_s[static_cast<size_t>(j)] - lo_s[static_cast<size_t>(j)] <= 0;
        if (fixed && vstat[static_cast<size_t>(j)] != VStat::FreeNb) continue;
        const double w = col_dot(j, rho);
        if (std::abs(w) <= opt.pivot_tol) continue;
        const double wt = dir * w;
        bool ok = false;
        switch (vstat[static_cast<size_t>(j)]) {
          case VStat::AtLower: ok = wt > 0; break;   // x_j up pulls x_r toward bound
          case VStat::AtUpper: ok = wt < 0; break;
          case VStat::FreeNb: ok = true; break;
          case VStat::Basic: break;
        }
        if (!ok) continue;
        // with the dir-multiplied row, d_j / wt >= 0 for every eligible
        // status (at lower: d>=0, wt>0; at upper: d<=0, wt<0; free: d~0)
        double ratio = d[static_cast<size_t>(j)] / wt;
        if (vstat[static_cast<size_t>(j)] == VStat::FreeNb) ratio = std::abs(ratio);
        ratio = std::max(ratio, 0.0);  // tolerance drift guard
        if (ratio < theta - 1e-12 ||
            (ratio < theta + 1e-12 &&
             (bland ? (q < 0 || j < q) : std::abs(w) > std::abs(wq)))) {
          theta = ratio;
          q = j;
          wq = w;
        }
      }
      if (q < 0) return Status::Infeasible;  // dual ray

      Eigen::VectorXd alpha(nr);
      scatter_col(q, alpha);
      ftran(alpha);
      if (std::abs(alpha[r]) <= opt.pivot_tol) {
        // numerically hopeless pivot: refactor and retry, or give up
        if (!etas.empty()) {
          refactor();
          compute_basics();
          compute_duals(c_s);
          continue;
        }
        return Status::IterationLimit;
      }

      const int jl = basic[static_cast<size_t>(r)];
      const double target = above ? hi_s[static_cast<size_t>(jl)] : lo_s[static_cast<size_t>(jl)];
      const double t = (x[static_cast<size_t>(jl)] - target) / alpha[r];
      for (int p = 0; p < nr; ++p)
        if (alpha[p] != 0.0)
          x[static_cast<size_t>(basic[static_cast<size_t>(p)])] -= alpha[p] * t;
      x[static_cast<size_t>(q)] = nb_value(q) + t;
      vstat[static_cast<size_t>(jl)] = above ? VStat::AtUpper : VStat::AtLower;
      x[static_cast<size_t>(jl)] = target;
      pos_of[static_cast<size_t>(jl)] = -1;
      basic[static_cast<size_t>(r)] = q;
      pos_of[static_cast<size_t>(q)] = r;
      vstat[static_cast<size_t>(q)] = VStat::Basic;

      push_eta(r, alpha);
      ++iters;
      if (static_cast<int>(etas.size()) >= opt.refactor_every) {
        refactor();
        compute_basics();
      }
      compute_duals(c_s);

      const double inf = primal_infeasibility();
      if (inf < last_inf - 1e-12) { last_inf = inf; stall = 0; bland = false; }
      else if (++stall > 1000) bland = true;
    }
  }

  // ---- orchestration --------------------------------------------------

  void extract_solution(Status st, int iters) {
    sol.status = st;
    sol.iterations = iters;
    sol.x.assign(static_cast<size_t>(nc), 0.0);
    sol.col_dual.assign(static_cast<size_t>(nc), 0.0);
    sol.row_dual.assign(static_cast<size_t>(nr), 0.0);
    for (int j = 0; j < nc; ++j)
      sol.x[static_cast<size_t>(j)] = x[static_cast<size_t>(j)] * col_scale[static_cast<size_t>(j)];
    double z = 0;
    for (int j = 0; j < nc; ++j) z += model.obj[static_cast<size_t>(j)] * sol.x[static_cast<size_t>(j)];
    sol.objective = z;
    if (st == Status::Optimal) {
      for (int i = 0; i < nr; ++i)
        sol.row_dual[static_cast<size_t>(i)] = y[i] * row_scale[static_cast<size_t>(i)];
      for (int j = 0; j < nc; ++j)
        sol.col_dual[static_cast<size_t>(j)] =
            d[static_cast<size_t>(j)] / col_scale[static_cast<size_t>(j)];
    }
  }

  const Solution& solve() {
    if (!initialized) init_basis();
    int iters = 0;
    bland = false;
    if (!factor_valid) refactor();
    compute_basics();
    compute_duals(c_s);

    Status st;
    const bool pf = is_primal_feasible();
    const bool df = is_dual_feasible();
    if (pf && df) {
      st = Status::Optimal;
    } else if (df) {
      st = run_dual(iters);
      // a dual run ends primal-feasible; duals may need a final polish
      if (st == Status::Optimal && !is_dual_feasible()) st = run_primal(iters);
    } else {
      st = run_primal(iters);
    }
    if (st == Status::Optimal) compute_duals(c_s);
    extract_solution(st, iters);
    primal_dirty = dual_dirty = false;
    return sol;
  }
};

Solver::Solver(Model m, Options opt) : impl_(std::make_unique<Impl>(std::move(m), opt)) {}
Solver::~Solver() = default;
Solver::Solver(Solver&&) noexcept = default;
Solver& Solver::operator=(Solver&&) noexcept = default;

const Model& Solver::model() const { return impl_->model; }
const Solution& Solver::last() const { return impl_->sol; }

void Solver::set_rhs(int row, double value) {
  Impl& im = *impl_;
  if (row < 0 || row >= im.nr) throw std::out_of_range("lp::Solver::set_rhs: bad row");
  im.model.rhs[static_cast<size_t>(row)] = value;
  im.b_s[static_cast<size_t>(row)] = value * im.row_scale[static_cast<size_t>(row)];
  im.primal_dirty = true;
}

void Solver::set_bounds(int col, double lo_bound, double hi_bound) {
  Impl& im = *impl_;
  if (col < 0 || col >= im.nc) throw std::out_of_range("lp::Solver::set_bounds: bad col");
  if (lo_bound > hi_bound) throw std::invalid_argument("lp::Solver::set_bounds: empty interval");
  im.model.lo[static_cast<size_t>(col)] = lo_bound;
  im.model.hi[static_cast<size_t>(col)] = hi_bound;
  const double s = im.col_scale[static_cast<size_t>(col)];
  im.lo_s[static_cast<size_t>(col)] = lo_bound / s;
  im.hi_s[static_cast<size_t>(col)] = hi_bound / s;
  if (im.initialized && im.vstat[static_cast<size_t>(col)] != VStat::Basic) {
    // keep the variable nonbasic at a consistent bound
    VStat& st = im.vstat[static_cast<size_t>(col)];
    if (st == VStat::AtLower && !std::isfinite(im.lo_s[static_cast<size_t>(col)]))
      st = std::isfinite(im.hi_s[static_cast<size_t>(col)]) ? VStat::AtUpper : VStat::FreeNb;
    if (st == VStat::AtUpper && !std::isfinite(im.hi_s[static_cast<size_t>(col)]))
      st = std::isfinite(im.lo_s[static_cast<size_t>(col)]) ? VStat::AtLower : VStat::FreeNb;
    im.x[static_cast<size_t>(col)] = im.nb_value(col);
  }
  im.primal_dirty = true;
}

void Solver::set_obj(int col, double coef) {
  Impl& im = *impl_;
  if (col < 0 || col >= im.nc) throw std::out_of_range("lp::Solver::set_obj: bad col");
  im.model.obj[static_cast<size_t>(col)] = coef;
  im.c_s[static_cast<size_t>(col)] = coef * im.col_scale[static_cast<size_t>(col)];
  im.dual_dirty = true;
}

int Solver::add_row(Sense s, double rhs_value, std::vector<Entry> entries, std::string name) {
  Impl& im = *impl_;
  for (const Entry& e : entries)
    if (e.col < 0 || e.col >= im.nc)
      throw std::out_of_range("lp::Solver::add_row: bad column index");
  const int row = im.model.add_row(s, rhs_value, entries, std::move(name));
  im.nr = im.model.n_rows();

  // scale the new row by the geometric mean of its scaled coefficients
  double mn = kInf, mx = 0;
  for (const Entry& e : entries) {
    const double a = std::abs(e.val) * im.col_scale[static_cast<size_t>(e.col)];
    if (a > 0) { mn = std::min(mn, a); mx = std::max(mx, a); }
  }
  const double rs = im.opt.scale && mx > 0 ? std::clamp(1.0 / std::sqrt(mn * mx), 1e-8, 1e8) : 1.0;
  im.row_scale.push_back(rs);
  im.b_s.push_back(rhs_value * rs);
  im.c_s.push_back(0.0);
  im.lo_s.push_back(0.0);
  im.hi_s.push_back(0.0);
  im.slack_bounds(row);

  // splice the row into the structural CSC arrays
  std::vector<Entry> sorted = im.model.rows.back();
  std::sort(sorted.begin(), sorted.end(), [](const Entry& a, const Entry& b) { return a.col < b.col; });
  std::vector<int> new_ptr(static_cast<size_t>(im.nc) + 1);
  std::vector<int> add_count(static_cast<size_t>(im.nc), 0);
  for (const Entry& e : sorted) ++add_count[static_cast<size_t>(e.col)];
  new_ptr[0] = 0;
  for (int j = 0; j < im.nc; ++j)
    new_ptr[static_cast<size_t>(j) + 1] =
        new_ptr[static_cast<size_t>(j)] +
        (im.col_ptr[static_cast<size_t>(j) + 1] - im.col_ptr[static_cast<size_t>(j)]) +
        add_count[static_cast<size_t>(j)];
  std::vector<int> nri(static_cast<size_t>(new_ptr[static_cast<size_t>(im.nc)]));
  std::vector<double> nval(nri.size());
  size_t si = 0;
  for (int j = 0; j < im.nc; ++j) {
    int w = new_ptr[static_cast<size_t>(j)];
    for (int p = im.col_ptr[static_cast<size_t>(j)]; p < im.col_ptr[static_cast<size_t>(j) + 1]; ++p, ++w) {
      nri[static_cast<size_t>(w)] = im.row_idx[static_cast<size_t>(p)];
      nval[static_cast<size_t>(w)] = im.val[static_cast<size_t>(p)];
    }
    while (si < sorted.size() && sorted[si].col == j) {
      nri[static_cast<size_t>(w)] = row;
      nval[static_cast<size_t>(w)] = sorted[si].val * rs * im.col_scale[static_cast<size_t>(j)];
      ++w; ++si;
    }
  }
  im.col_ptr = std::move(new_ptr);
  im.row_idx = std::move(nri);
  im.val = std::move(nval);

  if (im.initialized) {
    // the appended slack starts basic: duals stay valid (its cost is zero),
    // only primal feasibility can break, so the next solve runs dual simplex
    im.basic.push_back(im.nc + row);
    im.vstat.push_back(VStat::Basic);
    im.x.push_back(0.0);
    im.pos_of.push_back(im.nr - 1);
    if (im.factor_valid) {
      // grown basis is block triangular in the old one, so the new row
      // folds into the product form instead of forcing a refactorization
      Eta e;
      e.pos = im.nr - 1;
      e.diag = 1.0;
      e.append = true;
      for (const Entry& en : sorted)
        if (im.vstat[static_cast<size_t>(en.col)] == VStat::Basic)
          e.off.emplace_back(im.pos_of[static_cast<size_t>(en.col)],
                             en.val * rs * im.col_scale[static_cast<size_t>(en.col)]);
      im.etas.push_back(std::move(e));
    }
  }
  im.primal_dirty = true;
  return row;
}

void Solver::suggest_basis(const std::vector<std::pair<int, int>>& row_basic_col) {
  if (impl_->initialized)
    throw std::logic_error("lp::Solver::suggest_basis: only valid before the first solve");
  impl_->suggested = row_basic_col;
}

std::string Solver::mps() const { return to_mps(impl_->model); }

const Solution& Solver::solve() { return impl_->solve(); }

std::string to_mps(const Model& m) {
  std::ostringstream os;
  auto cname = [&](int j) {
    return m.col_name[static_cast<size_t>(j)].empty() ? "C" + std::to_string(j)
                                                      : m.col_name[static_cast<size_t>(j)];
  };
  auto rname = [&](int i) {
    return m.row_name[static_cast<size_t>(i)].empty() ? "R" + std::to_string(i)
                                                      : m.row_name[static_cast<size_t>(i)];
  };
  os << "NAME          LP\n";
  os << "ROWS\n N  COST\n";
  for (int i = 0; i < m.n_rows(); ++i)
    os << ' ' << static_cast<char>(m.sense[static_cast<size_t>(i)]) << "  " << rname(i) << "\n";
  os << "COLUMNS\n";
  std::vector<std::vector<std::pair<int, double>>> cols(static_cast<size_t>(m.n_cols()));
  for (int i = 0; i < m.n_rows(); ++i)
    for (const Entry& e : m.rows[static_cast<size_t>(i)])
      cols[static_cast<size_t>(e.col)].emplace_back(i, e.val);
  char buf[160];
  for (int j = 0; j < m.n_cols(); ++j) {
    if (m.obj[static_cast<size_t>(j)] != 0) {
      std::snprintf(buf, sizeof buf, "    %-10s %-10s %.17g\n", cname(j).c_str(), "COST",
                    m.obj[static_cast<size_t>(j)]);
      os << buf;
    }
    for (const auto& [i, v] : cols[static_cast<size_t>(j)]) {
      std::snprintf(buf, sizeof buf, "    %-10s %-10s %.17g\n", cname(j).c_str(),
                    rname(i).c_str(), v);
      os << buf;
    }
  }
  os << "RHS\n";
  for (int i = 0; i < m.n_rows(); ++i)
    if (m.rhs[static_cast<size_t>(i)] != 0) {
      std::snprintf(buf, sizeof buf, "    %-10s %-10s %.17g\n", "RHS", rname(i).c_str(),
                    m.rhs[static_cast<size_t>(i)]);
      os << buf;
    }
  os << "BOUNDS\n";
  for (int j = 0; j < m.n_cols(); ++j) {
    const double lo = m.lo[static_cast<size_t>(j)], hi = m.hi[static_cast<size_t>(j)];
    if (lo == 0 && !std::isfinite(hi)) continue;  // default bound
    if (lo == hi) {
      std::snprintf(buf, sizeof buf, " FX %-10s %-10s %.17g\n", "BND", cname(j).c_str(), lo);
      os << buf;
      continue;
    }
    if (!std::isfinite(lo) && !std::isfinite(hi)) {
      std::snprintf(buf, sizeof buf, " FR %-10s %-10s\n", "BND", cname(j).c_str());
      os << buf;
      continue;
    }
    if (std::isfinite(lo) && lo != 0) {
      std::snprintf(buf, sizeof buf, " LO %-10s %-10s %.17g\n", "BND", cname(j).c_str(), lo);
      os << buf;
    } else if (!std::isfinite(lo)) {
      std::snprintf(buf, sizeof buf, " MI %-10s %-10s\n", "BND", cname(j).c_str());
      os << buf;
    }
    if (std::isfinite(hi)) {
      std::snprintf(buf, sizeof buf, " UP %-10s %-10s %.17g\n", "BND", cname(j).c_str(), hi);
      os << buf;
    }
  }
  os << "ENDATA\n";
  return os.str();
}

}  // namespace coldchain::lp
