#pragma once

// Sparse bounded-variable revised simplex with primal and dual pivoting,
// built for sequences of closely related solves: right-hand-side updates,
// bound changes, objective changes, and appended rows reuse the current
// basis, so a re-solve typically takes a handful of pivots. Duals follow the
// minimization convention: row_dual[i] = d(objective)/d(rhs[i]).

#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace coldchain::lp {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense : char { LE = 'L', EQ = 'E', GE = 'G' };

enum class Status {
  Optimal,
  Infeasible,
  Unbounded,
  IterationLimit,
};

const char* status_name(Status s);

struct Entry {
  int col;
  double val;
};

// Row-wise LP description: minimize obj'x subject to row senses and
// variable bounds. Rows and columns are referenced by index everywhere;
// names are only carried for MPS dumps and diagnostics.
struct Model {
  std::vector<double> obj;
  std::vector<double> lo, hi;
  std::vector<Sense> sense;
  std::vector<double> rhs;
  std::vector<std::vector<Entry>> rows;
  std::vector<std::string> col_name, row_name;

  int n_cols() const { return static_cast<int>(obj.size()); }
  int n_rows() const { return static_cast<int>(rhs.size()); }
  int add_col(double obj_coef, double lo_bound, double hi_bound, std::string name = {});
  int add_row(Sense s, double rhs_value, std::vector<Entry> entries, std::string name = {});
  void validate() const;  // throws std::invalid_argument on bad indices or NaNs
};

struct Solution {
  Status status = Status::IterationLimit;
  double objective = 0;
  std::vector<double> x;         // structural variable values
  std::vector<double> row_dual;  // y_i = d obj / d rhs_i
  std::vector<double> col_dual;  // reduced costs of structural variables
  int iterations = 0;
};

struct Options {
  double feas_tol = 1e-7;
  double opt_tol = 1e-7;
  double pivot_tol = 1e-9;
  int max_iters = 200000;
  int refactor_every = 64;  // eta updates between LU refactorizations
  bool scale = true;        // geometric-mean equilibration
};

// Hot solver wrapping one Model instance. Edits keep the basis; solve()
// picks the pivoting path from what the edits invalidated (rhs and bounds
// leave the duals intact, so a dual-simplex restart suffices; objective
// edits restart the primal). Appended rows enter with a basic slack.
class Solver {
 public:
  explicit Solver(Model m, Options opt = {});
  ~Solver();
  Solver(Solver&&) noexcept;
  Solver& operator=(Solver&&) noexcept;

  const Model& model() const;

  void set_rhs(int row, double value);
  void set_bounds(int col, double lo_bound, double hi_bound);
  void set_obj(int col, double coef);
  int add_row(Sense s, double rhs_value, std::vector<Entry> entries, std::string name = {});

  // Suggest a starting basis before the first solve: each pair maps a row to
  // the column made basic in it; uncovered rows keep their slack. Falls back
  // to the all-slack basis if the suggested one is singular.
  void suggest_basis(const std::vector<std::pair<int, int>>& row_basic_col);

  const Solution& solve();
  const Solution& last() const;

  std::string mps() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string to_mps(const Model& m);

}  // namespace coldchain::lp
