#pragma once

// Conservative linear approximations (CLAs) of squared bus voltages.
//
// For every bus j two affine functions of the stacked injection vector
// x = [p; q] are fitted: an over-estimator a0 + a1'x >= |V_j|^2 and an
// under-estimator a0 + a1'x <= |V_j|^2 on every training sample. Each fit is
// an L1 one-sided regression solved as an LP.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fairpv/error.hpp"
#include "fairpv/grid.hpp"
#include "fairpv/io.hpp"
#include "fairpv/powerflow.hpp"
#include "fairpv/scenario.hpp"

namespace fairpv {

/// Per-device sampling envelope. PV rows follow NetworkModel::pv_buses(),
/// load rows follow load_buses().
struct SamplingSpec {
  Eigen::VectorXd pv_p_max;  // p ~ U(0, pv_p_max)
  Eigen::VectorXd pv_zeta;   // q ~ U(-zeta p, zeta p)
  Eigen::VectorXd load_p_min, load_p_max;
  Eigen::VectorXd load_q_min, load_q_max;
};

/// Nodewise maximum MPP and load envelope over every (t, scenario).
SamplingSpec sampling_spec(const NetworkModel& net, const ScenarioSet& scen);

/// Box of net injections reachable under a SamplingSpec, injection order.
struct InjectionRanges {
  Eigen::VectorXd p_min, p_max, q_min, q_max;  // length N_b-1
};
InjectionRanges injection_ranges(const NetworkModel& net, const SamplingSpec& spec);

struct SampleSet {
  Eigen::MatrixXd inputs;  // S x 2(N_b-1), rows are [p; q]
  Eigen::MatrixXd labels;  // S x N_b, squared voltage magnitudes
  InjectionRanges ranges;
  std::vector<int> injection_buses;  // bus id per injection slot; empty means 1..N_b-1
  std::uint64_t seed = 0;
  int n_divergent = 0;     // power flows that failed and were redrawn

  int size() const { return static_cast<int>(inputs.rows()); }
};

class TooManyDivergent : public Error {
 public:
  using Error::Error;
};

/// Draws n_samples operating points and labels each with the AC power flow.
/// Sample i uses its own RNG stream derived from (seed, i), so the result
/// does not depend on the thread count.
SampleSet sample_injections(const NetworkModel& net, const SamplingSpec& spec, int n_samples, std::uint64_t seed);
SampleSet sample_injections(const NetworkModel& net, const ScenarioSet& scen, int n_samples, std::uint64_t seed);

enum class Direction { over, under };
const char* to_string(Direction d);

struct CLACoefficients {
  double a0 = 0.0;
  Eigen::VectorXd a1;  // length 2(N_b-1)

  double evaluate(const Eigen::VectorXd& stacked) const { return a0 + a1.dot(stacked); }
};

/// L1 one-sided regression of the labels of `node`.
CLACoefficients fit_cla(const SampleSet& samples, int node, Direction dir);

struct CLAModel {
  std::vector<int> injection_buses;  // bus id per injection slot
  std::vector<CLACoefficients> over, under;  // indexed by bus id
  InjectionRanges ranges;
  int n_samples = 0;
  std::uint64_t seed = 0;
  double max_training_violation = 0.0;  // pu^2, after fitting

  int n_buses() const { return static_cast<int>(over.size()); }
  const CLACoefficients& coeffs(int node, Direction dir) const {
    return dir == Direction::over ? over[static_cast<std::size_t>(node)] : under[static_cast<std::size_t>(node)];
  }
};

/// a0 + a1'[p; q] for one bus and direction.
double evaluate_cla(const CLAModel& model, int node, Direction dir, const InjectionVector& inj);

/// Fits both directions for every bus (2 N_b regressions, run in parallel).
CLAModel build_cla(const SampleSet& samples);

struct ErrorStats {
  double min = 0.0, mean = 0.0, max = 0.0;
};

struct AuditReport {
  int n_samples = 0;
  int n_checks = 0;          // (sample, non-slack bus) pairs
  int n_violations = 0;      // pairs with over < label or under > label
  double violation_rate = 0.0;
  double max_violation_pu2 = 0.0;
  double max_violation_pu = 0.0;
  ErrorStats over_error;     // sqrt(over) - v_true, pu
  ErrorStats under_error;    // v_true - sqrt(under), pu
};

/// Replays the model on a labelled sample set.
AuditReport audit_samples(const CLAModel& model, const SampleSet& samples);

/// Draws n_holdout fresh samples (seed must differ from the training seed)
/// and audits them.
AuditReport audit_conservativeness(const CLAModel& model, const NetworkModel& net, const ScenarioSet& scen,
                                   int n_holdout, std::uint64_t seed);

std::string cla_to_json(const CLAModel& model, const Provenance& prov);
CLAModel cla_from_json(std::string_view text);
CLAModel load_cla(const std::filesystem::path& path);

/// Error table with min/mean/max rows per direction, plus summary comments.
std::string audit_to_csv(const AuditReport& report, const Provenance& prov);

}  // namespace fairpv
