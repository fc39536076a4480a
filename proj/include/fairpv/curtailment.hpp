#pragma once

// Day-ahead fairness-aware curtailment LP.
//
// Decision variables per plant j, step t, scenario w: active dispatch p and
// reactive dispatch q (only where the MPP is positive), a per-plant limit
// p_bar shared by every (t, w), a fairness level gamma per scenario, and an
// epigraph variable e per (j, w) bounding |gamma_w - Gamma_jw|, where Gamma is
// the produced share of the available daily energy.
//
// minimize  a1 * [sum (p_hat - p) + sum p_bar] + a2 * sum e
//
// subject to the inverter capability polygon, the power-factor cone, the
// limit coupling p <= p_bar, and the linear voltage bounds of the CLA model.

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fairpv/cla.hpp"
#include "fairpv/error.hpp"
#include "fairpv/grid.hpp"
#include "fairpv/io.hpp"
#include "fairpv/lp.hpp"
#include "fairpv/scenario.hpp"

namespace fairpv {

struct OptimizerConfig {
  double alpha1 = 1.0;
  double alpha2 = 0.0;
  int segments = 8;  // capability polygon resolution L
  std::optional<double> v_min, v_max;
  double coverage_margin = 0.10;  // tolerated extrapolation, fraction of training range width

  /// Throws ValidationError unless alpha1 > 0, alpha2 >= 0, segments >= 3.
  void check() const;
};

/// One tangent to p^2 + q^2 = s^2: p_coeff p + q_coeff q <= rhs, with
/// (p_coeff, q_coeff) = (cos t, +-sin t) and rhs = s.
struct CapabilityCut {
  double p_coeff = 0.0;
  double q_coeff = 0.0;
  double rhs = 0.0;
  double theta = 0.0;

  /// Slope/intercept form m p +- q <= n; only defined for sin(theta) != 0.
  double m() const { return p_coeff / std::abs(q_coeff); }
  double n() const { return rhs / std::abs(q_coeff); }
};

/// Tangents at theta_l = l pi / (2L), l = 0..L, in both q families; the
/// theta = 0 tangent appears once, giving 2L + 1 cuts.
std::vector<CapabilityCut> build_capability_cuts(double s_max, int segments);

/// Largest radius of the cut polygon relative to s_max, minus one:
/// 1 / cos(pi / (4L)) - 1.
double capability_overshoot(int segments);

class CoverageError : public Error {
 public:
  using Error::Error;
};

class Infeasible : public Error {
 public:
  Infeasible(const std::string& what, std::vector<std::pair<std::string, double>> rows);
  std::vector<std::pair<std::string, double>> worst_rows;  // (row name, violation)
};

/// Variable layout of an assembled problem. Slot arrays use
/// (w * n_pv + j) * steps + t; -1 marks a (j, t, w) with zero MPP.
struct PlanIndex {
  int n_pv = 0, steps = 0, n_scenarios = 0;
  std::vector<int> p, q;
  std::vector<int> p_bar;
  std::vector<int> gamma;
  std::vector<int> e;          // (w * n_pv + j), -1 for zero daily energy
  std::vector<double> energy;  // available daily energy per (w * n_pv + j)

  std::size_t slot(int j, int t, int w) const {
    return (static_cast<std::size_t>(w) * n_pv + j) * steps + t;
  }
};

struct DayAheadLP {
  LPProblem lp;
  PlanIndex index;
  double objective_offset = 0.0;  // a1 * sum p_hat, dropped from the LP cost
  int rows_presolved = 0;         // redundant rows not emitted
  std::vector<int> pv_buses;
  std::vector<Eigen::MatrixXd> mpp;  // per scenario, N_pv x T
  std::vector<double> zeta;          // per plant
};

DayAheadLP build_day_ahead_lp(const NetworkModel& net, const CLAModel& cla, const ScenarioSet& scen,
                              const OptimizerConfig& cfg);

struct SolverStats {
  int iterations = 0;
  int n_vars = 0;
  int n_rows = 0;
  int rows_presolved = 0;
};

struct CurtailmentPlan {
  std::vector<int> pv_buses;
  Eigen::VectorXd p_bar;                  // per plant, pu
  std::vector<Eigen::MatrixXd> dispatch_p;  // per scenario, N_pv x T
  std::vector<Eigen::MatrixXd> dispatch_q;
  Eigen::VectorXd gamma;                  // per scenario
  double objective = 0.0;
  SolverStats stats;
};

/// Solves the assembled LP and unpacks it. Throws Infeasible (with the most
/// violated rows of the phase-one point) when the voltage limits cannot be met.
CurtailmentPlan solve_plan(const DayAheadLP& problem, const SimplexOptions& opts = {});

/// Independent re-check of the plan invariants against the scenario data:
/// 0 <= p <= mpp, p <= p_bar, |q| <= zeta p, capability cuts. Returns one
/// message per violation larger than tol; empty means the plan is valid.
std::vector<std::string> check_plan_invariants(const CurtailmentPlan& plan, const NetworkModel& net,
                                               const ScenarioSet& scen, int segments, double tol = 1e-7);

std::string plan_to_json(const CurtailmentPlan& plan, const NetworkModel& net, const OptimizerConfig& cfg,
                         const Provenance& prov, bool include_dispatch = true);
CurtailmentPlan plan_from_json(std::string_view text, const NetworkModel& net);
CurtailmentPlan load_plan(const std::filesystem::path& path, const NetworkModel& net);

}  // namespace fairpv
