#include "fairpv/lp.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace fairpv {

int LPProblem::add_variable(double lo, double hi, double c, std::string name) {
  lower.push_back(lo);
  upper.push_back(hi);
  cost.push_back(c);
  if (!name.empty() || !names.empty()) {
    names.resize(static_cast<std::size_t>(n_vars));
    names.push_back(std::move(name));
  }
  return n_vars++;
}

void LPProblem::add_row(std::vector<std::pair<int, double>> coeffs, Sense sense, double rhs, std::string name) {
  rows.push_back(LinearRow{std::move(coeffs), sense, rhs, std::move(name)});
}

std::string LPProblem::variable_name(int j) const {
  if (static_cast<std::size_t>(j) < names.size() && !names[static_cast<std::size_t>(j)].empty())
    return names[static_cast<std::size_t>(j)];
  return "x" + std::to_string(j);
}

void LPProblem::check() const {
  const auto n = static_cast<std::size_t>(n_vars);
  if (cost.size() != n || lower.size() != n || upper.size() != n)
    throw ValidationError("LP vectors do not match n_vars");
  if (!names.empty() && names.size() != n) throw ValidationError("LP names do not match n_vars");
  for (std::size_t j = 0; j < n; ++j) {
    if (!(lower[j] <= upper[j])) throw ValidationError("LP variable " + variable_name(static_cast<int>(j)) + " has lower > upper");
    if (lower[j] == kInf || upper[j] == -kInf) throw ValidationError("LP variable bound is infinite on the wrong side");
    if (!std::isfinite(cost[j])) throw ValidationError("LP cost is not finite");
  }
  for (const auto& r : rows) {
    if (!std::isfinite(r.rhs)) throw ValidationError("LP row rhs is not finite");
    for (const auto& [j, a] : r.coeffs) {
      if (j < 0 || j >= n_vars) throw ValidationError("LP row coefficient index out of range");
      if (!std::isfinite(a)) throw ValidationError("LP row coefficient is not finite");
    }
  }
}

const char* to_string(LPStatus s) {
  switch (s) {
    case LPStatus::optimal: return "optimal";
    case LPStatus::infeasible: return "infeasible";
    case LPStatus::unbounded: return "unbounded";
  }
  return "unknown";
}

IterationLimit::IterationLimit(int n)
    : Error("simplex iteration limit reached after " + std::to_string(n) + " iterations"), iterations(n) {}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SpMat = Eigen::SparseMatrix<double>;

class Simplex {
 public:
  Simplex(const LPProblem& lp, const SimplexOptions& opts);
  LPSolution run();

 private:
  enum class Outcome { progressed, optimal, infeasible, unbounded };

  Outcome iterate();
  void pivot(int r, int k);
  void refactor();
  bool is_fixed(int j) const { return lo_(j) == up_(j); }

  const LPProblem& lp_;
  SimplexOptions opts_;
  int n_;
  int m_;
  SpMat a_;
  Eigen::VectorXd lo_, up_, cost_, x_;
  std::vector<int> head_;      // basic variable of each tableau row
  std::vector<int> nonbasic_;  // nonbasic variable of each tableau column
  RowMatrix t_;                // x_B = T x_N
  Eigen::VectorXd d_;          // phase-2 reduced costs, z = d' x_N + const
  Eigen::VectorXd price_;
  std::vector<int> infeasible_rows_;
  std::vector<double> sigma_;
  int iterations_ = 0;
  int degenerate_run_ = 0;
  int since_refactor_ = 0;
  bool bland_ = false;
};

Simplex::Simplex(const LPProblem& lp, const SimplexOptions& opts)
    : lp_(lp), opts_(opts), n_(lp.n_vars), m_(lp.n_rows()) {
  if (opts_.max_iterations <= 0) opts_.max_iterations = 50 * (n_ + m_) + 100;
  if (opts_.bland_after <= 0) opts_.bland_after = 10 * std::max(n_, 1);

  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i < m_; ++i)
    for (const auto& [j, v] : lp.rows[static_cast<std::size_t>(i)].coeffs) trip.emplace_back(i, j, v);
  a_.resize(m_, n_);
  a_.setFromTriplets(trip.begin(), trip.end());  // duplicates are summed

  const int total = n_ + m_;
  lo_.resize(total);
  up_.resize(total);
  cost_ = Eigen::VectorXd::Zero(total);
  x_ = Eigen::VectorXd::Zero(total);
  for (int j = 0; j < n_; ++j) {
    lo_(j) = lp.lower[static_cast<std::size_t>(j)];
    up_(j) = lp.upper[static_cast<std::size_t>(j)];
    cost_(j) = lp.cost[static_cast<std::size_t>(j)];
  }
  // logical s_i = a_i'x carries the row sense as bounds
  for (int i = 0; i < m_; ++i) {
    const auto& row = lp.rows[static_cast<std::size_t>(i)];
    lo_(n_ + i) = row.sense == Sense::le ? -kInf : row.rhs;
    up_(n_ + i) = row.sense == Sense::ge ? kInf : row.rhs;
  }

  for (int j = 0; j < n_; ++j) {
    const bool lf = std::isfinite(lo_(j)), uf = std::isfinite(up_(j));
    if (lf && uf)
      x_(j) = std::abs(up_(j)) < std::abs(lo_(j)) ? up_(j) : lo_(j);
    else if (lf)
      x_(j) = lo_(j);
    else if (uf)
      x_(j) = up_(j);
  }

  head_.resize(static_cast<std::size_t>(m_));
  nonbasic_.resize(static_cast<std::size_t>(n_));
  for (int i = 0; i < m_; ++i) head_[static_cast<std::size_t>(i)] = n_ + i;
  for (int j = 0; j < n_; ++j) nonbasic_[static_cast<std::size_t>(j)] = j;

  t_ = RowMatrix(a_);
  x_.tail(m_) = t_ * x_.head(n_);
  d_ = cost_.head(n_);
  price_.resize(n_);
}

void Simplex::pivot(int r, int k) {
  const double piv = t_(r, k);
  Eigen::VectorXd new_row = -t_.row(r).transpose() / piv;
  new_row(k) = 1.0 / piv;

  std::vector<int> nz;
  nz.reserve(static_cast<std::size_t>(n_));
  for (int j = 0; j < n_; ++j)
    if (new_row(j) != 0.0) nz.push_back(j);
  const bool sparse_row = static_cast<int>(nz.size()) * 4 < n_;

  auto update = [&](auto&& row) {
    const double c = row(k);
    if (c == 0.0) return;
    row(k) = 0.0;
    if (std::abs(c) < 1e-14) return;
    if (sparse_row) {
      for (int j : nz) row(j) += c * new_row(j);
    } else {
      row += c * new_row.transpose();
    }
  };
  for (int i = 0; i < m_; ++i)
    if (i != r) update(t_.row(i));
  update(d_.transpose());
  t_.row(r) = new_row.transpose();

  const int entering = nonbasic_[static_cast<std::size_t>(k)];
  nonbasic_[static_cast<std::size_t>(k)] = head_[static_cast<std::size_t>(r)];
  head_[static_cast<std::size_t>(r)] = entering;
  ++since_refactor_;
}

void Simplex::refactor() {
  since_refactor_ = 0;
  if (m_ == 0) {
    d_ = cost_.head(n_);
    for (int k = 0; k < n_; ++k) d_(k) = cost_(nonbasic_[static_cast<std::size_t>(k)]);
    return;
  }
  // columns of [A, -I] for a given variable
  auto column = [&](int var, int col, std::vector<Eigen::Triplet<double>>& out) {
    if (var < n_) {
      for (SpMat::InnerIterator it(a_, var); it; ++it) out.emplace_back(static_cast<int>(it.row()), col, it.value());
    } else {
      out.emplace_back(var - n_, col, -1.0);
    }
  };
  std::vector<Eigen::Triplet<double>> trip;
  for (int r = 0; r < m_; ++r) column(head_[static_cast<std::size_t>(r)], r, trip);
  SpMat basis(m_, m_);
  basis.setFromTriplets(trip.begin(), trip.end());
  basis.makeCompressed();

  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(basis);
  if (lu.info() != Eigen::Success) throw NumericalBreakdown("singular basis during reinversion");

  trip.clear();
  for (int k = 0; k < n_; ++k) column(nonbasic_[static_cast<std::size_t>(k)], k, trip);
  SpMat nonbasic_cols(m_, n_);
  nonbasic_cols.setFromTriplets(trip.begin(), trip.end());
  const Eigen::MatrixXd rhs = Eigen::MatrixXd(nonbasic_cols);
  Eigen::MatrixXd solved = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !solved.allFinite()) throw NumericalBreakdown("basis solve failed");
  t_ = -solved;

  Eigen::VectorXd xn(n_), cb(m_);
  for (int k = 0; k < n_; ++k) xn(k) = x_(nonbasic_[static_cast<std::size_t>(k)]);
  for (int r = 0; r < m_; ++r) cb(r) = cost_(head_[static_cast<std::size_t>(r)]);
  const Eigen::VectorXd xb = t_ * xn;
  for (int r = 0; r < m_; ++r) x_(head_[static_cast<std::size_t>(r)]) = xb(r);
  d_ = t_.transpose() * cb;
  for (int k = 0; k < n_; ++k) d_(k) += cost_(nonbasic_[static_cast<std::size_t>(k)]);
}

Simplex::Outcome Simplex::iterate() {
  const double ftol = opts_.feasibility_tol;
  const double otol = opts_.optimality_tol;

  infeasible_rows_.clear();
  sigma_.clear();
  for (int r = 0; r < m_; ++r) {
    const int j = head_[static_cast<std::size_t>(r)];
    if (x_(j) < lo_(j) - ftol) {
      infeasible_rows_.push_back(r);
      sigma_.push_back(-1.0);
    } else if (x_(j) > up_(j) + ftol) {
      infeasible_rows_.push_back(r);
      sigma_.push_back(1.0);
    }
  }
  const bool phase1 = !infeasible_rows_.empty();
  if (phase1) {
    price_.setZero();
    for (std::size_t s = 0; s < infeasible_rows_.size(); ++s)
      price_ += sigma_[s] * t_.row(infeasible_rows_[s]).transpose();
  } else {
    price_ = d_;
  }

  // pricing
  int enter_col = -1;
  double enter_dir = 0.0;
  double best = 0.0;
  for (int k = 0; k < n_; ++k) {
    const int j = nonbasic_[static_cast<std::size_t>(k)];
    if (is_fixed(j)) continue;
    const double dj = price_(k);
    double dir = 0.0;
    if (x_(j) == lo_(j)) {
      if (dj < -otol) dir = 1.0;
    } else if (x_(j) == up_(j)) {
      if (dj > otol) dir = -1.0;
    } else if (std::abs(dj) > otol) {
      dir = dj > 0.0 ? -1.0 : 1.0;
    }
    if (dir == 0.0) continue;
    if (bland_) {
      if (enter_col < 0 || j < nonbasic_[static_cast<std::size_t>(enter_col)]) {
        enter_col = k;
        enter_dir = dir;
      }
    } else if (std::abs(dj) > best) {
      best = std::abs(dj);
      enter_col = k;
      enter_dir = dir;
    }
  }
  if (enter_col < 0) return phase1 ? Outcome::infeasible : Outcome::optimal;

  const int k = enter_col;
  const int entering = nonbasic_[static_cast<std::size_t>(k)];
  const double span = up_(entering) - lo_(entering);  // inf unless both bounds finite

  // Harris pass over hard blocks (basic variables that must stay in bounds)
  struct Breakpoint {
    double t;
    double g;
    int row;
  };
  std::vector<Breakpoint> breakpoints;
  std::vector<char> row_infeasible;
  if (phase1) {
    row_infeasible.assign(static_cast<std::size_t>(m_), 0);
    for (std::size_t s = 0; s < infeasible_rows_.size(); ++s)
      row_infeasible[static_cast<std::size_t>(infeasible_rows_[s])] = sigma_[s] < 0 ? 1 : 2;
  }

  double relaxed_limit = kInf;
  for (int r = 0; r < m_; ++r) {
    const double g = t_(r, k) * enter_dir;
    if (std::abs(g) <= opts_.min_pivot) continue;
    const int j = head_[static_cast<std::size_t>(r)];
    const double xv = x_(j);
    const int state = phase1 ? row_infeasible[static_cast<std::size_t>(r)] : 0;
    if (state == 1) {  // below lower
      if (g > 0.0) {
        breakpoints.push_back({(lo_(j) - xv) / g, g, r});
        if (std::isfinite(up_(j))) relaxed_limit = std::min(relaxed_limit, (up_(j) + ftol - xv) / g);
      }
    } else if (state == 2) {  // above upper
      if (g < 0.0) {
        breakpoints.push_back({(up_(j) - xv) / g, -g, r});
        if (std::isfinite(lo_(j))) relaxed_limit = std::min(relaxed_limit, (lo_(j) - ftol - xv) / g);
      }
    } else if (g > 0.0 && std::isfinite(up_(j))) {
      relaxed_limit = std::min(relaxed_limit, (up_(j) + ftol - xv) / g);
    } else if (g < 0.0 && std::isfinite(lo_(j))) {
      relaxed_limit = std::min(relaxed_limit, (lo_(j) - ftol - xv) / g);
    }
  }

  int leave_row = -1;
  double leave_bound = 0.0;
  double step = kInf;
  if (std::isfinite(relaxed_limit)) {
    double best_g = 0.0;
    double best_t = kInf;
    for (int r = 0; r < m_; ++r) {
      const double g = t_(r, k) * enter_dir;
      if (std::abs(g) <= opts_.min_pivot) continue;
      const int j = head_[static_cast<std::size_t>(r)];
      const double xv = x_(j);
      const int state = phase1 ? row_infeasible[static_cast<std::size_t>(r)] : 0;
      double t = kInf, bound = 0.0;
      if (state == 1) {
        if (g > 0.0 && std::isfinite(up_(j))) t = (up_(j) - xv) / g, bound = up_(j);
      } else if (state == 2) {
        if (g < 0.0 && std::isfinite(lo_(j))) t = (lo_(j) - xv) / g, bound = lo_(j);
      } else if (g > 0.0 && std::isfinite(up_(j))) {
        t = (up_(j) - xv) / g, bound = up_(j);
      } else if (g < 0.0 && std::isfinite(lo_(j))) {
        t = (lo_(j) - xv) / g, bound = lo_(j);
      }
      if (!(t <= relaxed_limit)) continue;
      bool take;
      if (bland_) {
        take = leave_row < 0 || t < best_t - 1e-12 ||
               (t <= best_t + 1e-12 && j < head_[static_cast<std::size_t>(leave_row)]);
      } else {
        take = std::abs(g) > best_g;
      }
      if (take) {
        best_g = std::abs(g);
        best_t = t;
        leave_row = r;
        leave_bound = bound;
      }
    }
    if (leave_row >= 0) step = std::max(best_t, 0.0);
  }

  // phase 1: pass breakpoints while the sum of infeasibilities keeps falling
  if (phase1 && !breakpoints.empty()) {
    std::sort(breakpoints.begin(), breakpoints.end(), [&](const Breakpoint& a, const Breakpoint& b) {
      if (a.t != b.t) return a.t < b.t;
      return head_[static_cast<std::size_t>(a.row)] < head_[static_cast<std::size_t>(b.row)];
    });
    double slope = price_(k) * enter_dir;
    for (const auto& bp : breakpoints) {
      if (bp.t > step || bp.t > span) break;
      slope += bp.g;
      if (bland_ || slope >= -otol) {
        const int j = head_[static_cast<std::size_t>(bp.row)];
        leave_row = bp.row;
        leave_bound = row_infeasible[static_cast<std::size_t>(bp.row)] == 1 ? lo_(j) : up_(j);
        step = std::max(bp.t, 0.0);
        break;
      }
    }
  }

  if (!std::isfinite(step) && !std::isfinite(span)) {
    if (phase1) throw NumericalBreakdown("phase-1 ratio test found no blocking row");
    return Outcome::unbounded;
  }
  if (span <= step) {
    // bound flip, basis unchanged
    x_(entering) = enter_dir > 0 ? up_(entering) : lo_(entering);
    for (int r = 0; r < m_; ++r) x_(head_[static_cast<std::size_t>(r)]) += t_(r, k) * enter_dir * span;
    degenerate_run_ = 0;
    return Outcome::progressed;
  }
  if (std::abs(t_(leave_row, k)) < opts_.min_pivot) throw NumericalBreakdown("pivot below threshold");

  x_(entering) += enter_dir * step;
  if (step != 0.0)
    for (int r = 0; r < m_; ++r) x_(head_[static_cast<std::size_t>(r)]) += t_(r, k) * enter_dir * step;
  x_(head_[static_cast<std::size_t>(leave_row)]) = leave_bound;

  if (step <= 1e-12) {
    if (++degenerate_run_ >= opts_.bland_after) bland_ = true;
  } else {
    degenerate_run_ = 0;
    bland_ = false;
  }
  pivot(leave_row, k);
  return Outcome::progressed;
}

LPSolution Simplex::run() {
  LPSolution sol;
  for (;;) {
    if (iterations_ >= opts_.max_iterations) throw IterationLimit(iterations_);
    if (since_refactor_ >= opts_.refactor_interval) refactor();
    Outcome out = iterate();
    if (out == Outcome::progressed) {
      ++iterations_;
      continue;
    }
    if (since_refactor_ > 0) {
      // re-derive the tableau from the basis before trusting a terminal state
      refactor();
      out = iterate();
      if (out == Outcome::progressed) {
        ++iterations_;
        continue;
      }
    }
    sol.status = out == Outcome::optimal     ? LPStatus::optimal
                 : out == Outcome::infeasible ? LPStatus::infeasible
                                              : LPStatus::unbounded;
    break;
  }
  sol.iterations = iterations_;
  sol.x = x_.head(n_);
  sol.objective = cost_.head(n_).dot(sol.x);
  return sol;
}

}  // namespace

LPSolution solve_lp(const LPProblem& lp, const SimplexOptions& opts) {
  lp.check();
  Simplex simplex(lp, opts);
  return simplex.run();
}

Eigen::VectorXd row_activity(const LPProblem& lp, const Eigen::VectorXd& x) {
  Eigen::VectorXd act(lp.n_rows());
  for (int i = 0; i < lp.n_rows(); ++i) {
    double s = 0.0;
    for (const auto& [j, a] : lp.rows[static_cast<std::size_t>(i)].coeffs) s += a * x(j);
    act(i) = s;
  }
  return act;
}

namespace {
double row_violation(const LinearRow& row, double activity) {
  switch (row.sense) {
    case Sense::le: return activity - row.rhs;
    case Sense::ge: return row.rhs - activity;
    case Sense::eq: return std::abs(activity - row.rhs);
  }
  return 0.0;
}
}  // namespace

double check_feasibility(const LPProblem& lp, const Eigen::VectorXd& x) {
  if (x.size() != lp.n_vars) throw Error("check_feasibility: length mismatch");
  double worst = 0.0;
  for (int j = 0; j < lp.n_vars; ++j) {
    worst = std::max(worst, lp.lower[static_cast<std::size_t>(j)] - x(j));
    worst = std::max(worst, x(j) - lp.upper[static_cast<std::size_t>(j)]);
  }
  const Eigen::VectorXd act = row_activity(lp, x);
  for (int i = 0; i < lp.n_rows(); ++i) worst = std::max(worst, row_violation(lp.rows[static_cast<std::size_t>(i)], act(i)));
  return worst;
}

std::vector<std::pair<int, double>> most_violated_rows(const LPProblem& lp, const Eigen::VectorXd& x, int k) {
  const Eigen::VectorXd act = row_activity(lp, x);
  std::vector<std::pair<int, double>> out;
  for (int i = 0; i < lp.n_rows(); ++i) {
    const double v = row_violation(lp.rows[static_cast<std::size_t>(i)], act(i));
    if (v > 0.0) out.emplace_back(i, v);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (static_cast<int>(out.size()) > k) out.resize(static_cast<std::size_t>(k));
  return out;
}

void dump_lp(const LPProblem& lp, std::ostream& os) {
  auto term = [&](double a, int j) {
    std::ostringstream t;
    t.precision(17);
    t << (a < 0 ? " - " : " + ") << std::abs(a) << " " << lp.variable_name(j);
    return t.str();
  };
  os.precision(17);
  os << "minimize";
  for (int j = 0; j < lp.n_vars; ++j)
    if (lp.cost[static_cast<std::size_t>(j)] != 0.0) os << term(lp.cost[static_cast<std::size_t>(j)], j);
  os << "\nsubject to\n";
  for (int i = 0; i < lp.n_rows(); ++i) {
    const auto& row = lp.rows[static_cast<std::size_t>(i)];
    os << (row.name.empty() ? "r" + std::to_string(i) : row.name) << ":";
    for (const auto& [j, a] : row.coeffs) os << term(a, j);
    os << (row.sense == Sense::le ? " <= " : row.sense == Sense::ge ? " >= " : " = ") << row.rhs << "\n";
  }
  os << "bounds\n";
  for (int j = 0; j < lp.n_vars; ++j)
    os << lp.lower[static_cast<std::size_t>(j)] << " <= " << lp.variable_name(j) << " <= "
       << lp.upper[static_cast<std::size_t>(j)] << "\n";
  os << "end\n";
}

}  // namespace fairpv
