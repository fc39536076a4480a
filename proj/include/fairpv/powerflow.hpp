#pragma once

// Full Newton-Raphson AC power flow in polar coordinates.
//
// All non-slack buses are PQ; the slack is held at 1.0 pu, 0 rad. Injection
// vectors follow NetworkModel::injection_index() ordering, generation
// positive and load negative.

#include <Eigen/Dense>

#include "fairpv/error.hpp"
#include "fairpv/grid.hpp"

namespace fairpv {

struct InjectionVector {
  Eigen::VectorXd p;  // length N_b-1
  Eigen::VectorXd q;  // length N_b-1

  static InjectionVector zeros(int n) { return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)}; }
  /// Stacked [p; q], the regressor layout of the linear voltage models.
  Eigen::VectorXd stacked() const;
};

struct PowerFlowSolution {
  Eigen::VectorXd v_mag;  // length N_b
  Eigen::VectorXd v_ang;  // radians, length N_b
  int iterations = 0;     // number of mismatch evaluations
  double residual = 0.0;  // final infinity-norm mismatch, pu

  Eigen::VectorXcd phasors() const;
};

struct PowerFlowOptions {
  double tol = 1e-10;
  int max_iter = 30;
};

class NonConvergence : public Error {
 public:
  NonConvergence(int iterations, double residual);
  int iterations;
  double residual;
};

class SingularJacobian : public Error {
 public:
  using Error::Error;
};

/// Holds the admittance matrix of one network so repeated solves (sampling,
/// validation sweeps) skip reassembly. Immutable; solve() is const and
/// re-entrant.
class PowerFlowSolver {
 public:
  explicit PowerFlowSolver(const NetworkModel& net);

  PowerFlowSolution solve(const InjectionVector& inj, const PowerFlowOptions& opts = {}) const;

  const Eigen::MatrixXcd& ybus() const { return ybus_; }
  int slack() const { return slack_; }
  int n_buses() const { return static_cast<int>(ybus_.rows()); }

 private:
  Eigen::MatrixXcd ybus_;
  int slack_;
  std::vector<int> non_slack_;
};

PowerFlowSolution solve_pf(const NetworkModel& net, const InjectionVector& inj, const PowerFlowOptions& opts = {});

/// Independent residual audit: recomputes S = V .* conj(Y V) and returns
/// the infinity norm of (S_computed - S_specified) over non-slack buses.
double check_mismatch(const NetworkModel& net, const PowerFlowSolution& sol, const InjectionVector& inj);

/// Complex power injected at every bus (including the slack) for a solution.
Eigen::VectorXcd bus_injections(const NetworkModel& net, const PowerFlowSolution& sol);

/// Sum over branches of series I^2 Z losses plus shunt charging terms, pu.
std::complex<double> branch_losses(const NetworkModel& net, const PowerFlowSolution& sol);

}  // namespace fairpv
