#pragma once

// Dense two-phase primal simplex for small-to-medium linear programs.
//
//   minimize    c'x
//   subject to  a_i'x  {<=, >=, =}  b_i
//               l <= x <= u          (entries may be infinite)
//
// Simple bounds are handled natively by the bounded-variable simplex, so they
// never become rows. The tableau is the condensed (nonbasic-column) form
// x_B = T x_N, which keeps its width at n_vars no matter how many rows the
// problem has. Phase 1 minimizes the sum of bound infeasibilities of the basic
// variables; equality rows enter as logicals fixed at their right-hand side,
// which act as the phase-1 artificials.

#include <Eigen/Dense>

#include <iosfwd>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "fairpv/error.hpp"

namespace fairpv {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { le, ge, eq };

struct LinearRow {
  std::vector<std::pair<int, double>> coeffs;
  Sense sense = Sense::le;
  double rhs = 0.0;
  std::string name;
};

struct LPProblem {
  int n_vars = 0;
  std::vector<double> cost;
  std::vector<LinearRow> rows;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<std::string> names;  // optional, empty or length n_vars

  int add_variable(double lo, double hi, double c, std::string name = {});
  void add_row(std::vector<std::pair<int, double>> coeffs, Sense sense, double rhs, std::string name = {});
  int n_rows() const { return static_cast<int>(rows.size()); }
  std::string variable_name(int j) const;

  /// Throws ValidationError if an index, bound pair or rhs is malformed.
  void check() const;
};

enum class LPStatus { optimal, infeasible, unbounded };

const char* to_string(LPStatus s);

struct LPSolution {
  LPStatus status = LPStatus::infeasible;
  double objective = 0.0;
  Eigen::VectorXd x;  // final iterate; meaningful bounds-wise for every status
  int iterations = 0;
};

struct SimplexOptions {
  int max_iterations = 0;         // 0: 50 * (n_vars + n_rows)
  int bland_after = 0;            // consecutive degenerate pivots; 0: 10 * n_vars
  int refactor_interval = 2000;   // pivots between basis reinversions
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-9;
  double pivot_tol = 1e-9;
  double min_pivot = 1e-11;
};

class IterationLimit : public Error {
 public:
  explicit IterationLimit(int n);
  int iterations;
};

class NumericalBreakdown : public Error {
 public:
  using Error::Error;
};

LPSolution solve_lp(const LPProblem& lp, const SimplexOptions& opts = {});

/// Largest violation of any row or bound at x (0 when x is feasible).
double check_feasibility(const LPProblem& lp, const Eigen::VectorXd& x);

/// Row activities a_i'x.
Eigen::VectorXd row_activity(const LPProblem& lp, const Eigen::VectorXd& x);

/// The k rows with the largest violation at x, worst first, as (row, violation).
std::vector<std::pair<int, double>> most_violated_rows(const LPProblem& lp, const Eigen::VectorXd& x, int k);

/// Plain-text dump, one constraint per line with named variables.
void dump_lp(const LPProblem& lp, std::ostream& os);

}  // namespace fairpv
