#pragma once

// Fairness and curtailment metrics, AC validation of optimized plans, and
// alpha2 sensitivity sweeps.

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "fairpv/cla.hpp"
#include "fairpv/curtailment.hpp"
#include "fairpv/grid.hpp"
#include "fairpv/io.hpp"
#include "fairpv/scenario.hpp"

namespace fairpv {

/// Jain's index (sum b)^2 / (N sum b^2). An empty or all-zero vector counts
/// as perfectly fair (1).
template <class Vec>
double jain_index(const Vec& b) {
  const auto n = static_cast<double>(b.size());
  const double sq = b.squaredNorm();
  if (n == 0.0 || sq == 0.0) return 1.0;
  const double s = b.sum();
  return s * s / (n * sq);
}

struct ScenarioFairness {
  Eigen::VectorXd beta;       // produced / available energy, plants with energy only
  std::vector<int> plants;    // plant row of each beta entry
  double jfi = 1.0;
  double net_curtailment_pct = 0.0;
};

struct FairnessReport {
  std::vector<ScenarioFairness> scenarios;
  ScenarioFairness pooled;    // energies summed over scenarios first
  int stress_scenario = 0;

  // Headline numbers, taken from the stress scenario.
  const Eigen::VectorXd& beta() const { return scenarios[static_cast<std::size_t>(stress_scenario)].beta; }
  double jfi() const { return scenarios[static_cast<std::size_t>(stress_scenario)].jfi; }
  double net_curtailment_pct() const {
    return scenarios[static_cast<std::size_t>(stress_scenario)].net_curtailment_pct;
  }
};

FairnessReport compute_fairness(const CurtailmentPlan& plan, const ScenarioSet& scen, int stress_scenario = 0);

struct VoltagePoint {
  int t = 0, scenario = 0, node = 0;
  double v_true = 0.0, v_over = 0.0, v_under = 0.0;
};

struct ValidationReport {
  std::vector<VoltagePoint> points;  // every (t, scenario, non-slack bus)
  ErrorStats over_error;             // v_over - v_true, pu
  ErrorStats under_error;            // v_true - v_under, pu
  double max_v = 0.0, min_v = 0.0;
  int n_above_limit = 0, n_below_limit = 0;  // true voltage outside [v_min, v_max] + tol
  int n_inverted = 0;                // v_under > v_over
  int n_cla_above_limit = 0;         // CLA over-estimate above v_max + tol
  std::vector<std::string> failures; // power flows that did not converge
  double v_min_limit = 0.95, v_max_limit = 1.05;

  bool ok() const { return failures.empty() && n_above_limit == 0 && n_below_limit == 0; }
};

/// Runs the AC power flow at every (t, scenario) with the planned dispatch
/// and compares with the CLA estimates and the voltage limits.
ValidationReport validate_plan(const CurtailmentPlan& plan, const NetworkModel& net, const CLAModel& cla,
                               const ScenarioSet& scen, double tol = 5e-3);

/// Highest bus voltage over the day of one scenario with every plant at its
/// MPP and unity power factor.
double max_v_uncurtailed(const NetworkModel& net, const ScenarioSet& scen, int scenario);

struct SweepRow {
  double alpha2 = 0.0;
  bool ok = false;
  double jfi = 0.0;
  double net_curtailment_pct = 0.0;
  double objective = 0.0;
  std::string error;  // failure marker when !ok
};

/// Re-solves the plan for each alpha2 (non-negative, ascending). A failing
/// point is recorded and the sweep continues.
std::vector<SweepRow> sweep_alpha2(const std::vector<double>& alphas, const NetworkModel& net, const CLAModel& cla,
                                   const ScenarioSet& scen, const OptimizerConfig& base, int stress_scenario = 0);

std::string sweep_to_csv(const std::vector<SweepRow>& rows, const Provenance& prov);
std::string fairness_to_json(const FairnessReport& report, const CurtailmentPlan& plan, const Provenance& prov);
/// Error table in the CLA audit layout plus summary comments.
std::string validation_stats_csv(const ValidationReport& report, const Provenance& prov);
/// Long format: t,scenario,node,v_true,v_over,v_under,v_min,v_max.
std::string voltages_csv(const ValidationReport& report, const Provenance& prov);

}  // namespace fairpv
