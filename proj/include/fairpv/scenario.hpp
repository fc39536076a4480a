#pragma once

// Day-ahead scenarios: PV maximum-power-point trajectories and load
// trajectories, per-unit, on a uniform grid of T steps covering one day.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fairpv/error.hpp"
#include "fairpv/grid.hpp"
#include "fairpv/io.hpp"
#include "fairpv/powerflow.hpp"

namespace fairpv {

struct Scenario {
  Eigen::MatrixXd pv_mpp;  // N_pv x T
  Eigen::MatrixXd load_p;  // N_load x T, consumption >= 0
  Eigen::MatrixXd load_q;  // N_load x T
};

struct ScenarioSet {
  int timestep_minutes = 15;
  int steps = 96;
  std::vector<int> pv_buses;    // row order of pv_mpp
  std::vector<int> load_buses;  // row order of load_p / load_q
  std::vector<Scenario> scenarios;

  int n_scenarios() const { return static_cast<int>(scenarios.size()); }
  int n_pv() const { return static_cast<int>(pv_buses.size()); }
  int n_loads() const { return static_cast<int>(load_buses.size()); }
};

/// Throws ValidationError unless shapes agree, bus lists match the network,
/// and 0 <= pv_mpp <= s_max, load_p >= 0 hold elementwise.
void validate(const ScenarioSet& scen, const NetworkModel& net);

/// Nodal injection vector for one (scenario, step) given PV dispatch
/// (length N_pv each); loads are withdrawn.
InjectionVector assemble_injections(const NetworkModel& net, const ScenarioSet& scen, int scenario, int step,
                                    const Eigen::VectorXd& pv_p, const Eigen::VectorXd& pv_q);

enum class Percentile { p10, p90 };

/// 10th/90th percentile z-score of the standard normal.
inline constexpr double kZ90 = 1.2815515655446004;

struct DayParams {
  int steps = 96;
  double sunrise_h = 6.0;
  double sunset_h = 20.0;
  double peak_fraction = 1.0;   // (0, 1]
  double shape_exponent = 1.5;  // cos^k of the normalized solar-hour angle
  double p10_factor = 0.35;     // scale of the low-irradiance day, (0, 1]
};

/// Clear-sky bell MPP profile per plant, N_pv x steps. Zero outside daylight;
/// equals s_max * peak_fraction * percentile factor at solar noon.
Eigen::MatrixXd generate_pv_mpp(std::span<const PlantSpec> plants, Percentile pct, const DayParams& day);

class DegenerateHistory : public Error {
 public:
  using Error::Error;
};

struct DemandModel {
  int n_loads = 0;
  int steps = 0;
  Eigen::VectorXd mean;        // load-major: index = load * steps + t
  Eigen::MatrixXd covariance;  // includes shrinkage
  Eigen::MatrixXd cholesky;    // lower factor of covariance
  double shrinkage = 0.0;
  std::string day_type = "weekday";

  Eigen::VectorXd sigma() const { return covariance.diagonal().cwiseSqrt(); }
  /// One random day, same layout as mean.
  Eigen::VectorXd sample_day(std::mt19937_64& rng) const;
};

inline constexpr int kMinHistoryDays = 30;

/// Empirical mean plus covariance shrunk by lambda*I, lambda = 1e-6 trace/dim.
/// history rows are days laid out like DemandModel::mean.
DemandModel fit_demand_model(const Eigen::MatrixXd& history, int n_loads, int steps);

struct DemandProfile {
  Eigen::MatrixXd load_p;  // N_load x T
  Eigen::MatrixXd load_q;
};

/// Deterministic percentile envelope mean +/- z sigma, clipped at 0; Q from P
/// through each load's constant lagging power factor.
DemandProfile sample_demand(const DemandModel& model, Percentile pct, const Eigen::VectorXd& power_factors);
DemandProfile sample_demand(const DemandModel& model, Percentile pct, double power_factor = 0.95);

/// Scenario 0 = {pv_hi, dem_lo} (over-voltage stress), scenario 1 = {pv_lo, dem_hi}.
ScenarioSet couple_extremes(const Eigen::MatrixXd& pv_hi, const Eigen::MatrixXd& pv_lo, const DemandProfile& dem_hi,
                            const DemandProfile& dem_lo);

struct HistoryParams {
  int days = 365;
  double ar_coefficient = 0.85;
  double ar_sigma = 0.12;    // stationary std of the intraday multiplicative noise
  double day_sigma = 0.08;   // std of the whole-day level shift
};

/// Synthetic per-load demand history (days x N_load*steps) around the shape
/// named by each load's profile_ref ("residential" or "commercial").
Eigen::MatrixXd synthesize_history(const NetworkModel& net, int steps, const HistoryParams& params, std::uint64_t seed);

struct SynthesisParams {
  DayParams day;
  HistoryParams history;
  std::uint64_t seed = 42;
};

/// Full scenario pipeline: percentile PV profiles, fitted demand model,
/// percentile demand envelopes, coupled into two extreme scenarios.
ScenarioSet synthesize_scenarios(const NetworkModel& net, const SynthesisParams& params);

/// One CSV per (scenario, quantity): scenario<w>_{pv_mpp,load_p,load_q}.csv,
/// columns "t" then bus ids, rows = steps, per-unit values.
void save_scenarios(const ScenarioSet& scen, const std::filesystem::path& dir, const Provenance& prov);
ScenarioSet load_scenarios(const std::filesystem::path& dir);

}  // namespace fairpv
