#pragma once

// Per-unit radial distribution network model.
//
// Buses are indexed 0..N_b-1. Exactly one bus is the slack (substation
// secondary); every other bus is PQ. Injection vectors used by the power
// flow and the linear voltage models are ordered by ascending bus id with the
// slack removed; NetworkModel::injection_index() gives the mapping.

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fairpv/error.hpp"

namespace fairpv {

enum class BusKind { slack, pq };

struct PlantSpec {
  double s_max = 0.0;   // pu apparent power
  double pf_min = 1.0;  // minimum power factor, (0, 1]

  /// tan(acos(pf_min)): ratio |q|/p permitted by the power-factor limit.
  double zeta() const;
};

struct LoadSpec {
  std::string profile_ref;
  double peak_p = 0.0;          // pu, used by the synthetic history generator
  double power_factor = 0.95;   // lagging
};

struct Bus {
  int id = 0;
  BusKind kind = BusKind::pq;
  double base_kv = 0.4;
  std::optional<PlantSpec> pv_plant;
  std::optional<LoadSpec> load;
};

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;        // pu
  double x = 0.0;        // pu
  double b_shunt = 0.0;  // pu, total line charging
};

struct NetworkModel {
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  double s_base_kva = 400.0;
  double v_base_v = 400.0;
  double v_min = 0.95;
  double v_max = 1.05;

  int n_buses() const { return static_cast<int>(buses.size()); }
  int slack() const;

  /// Position of `bus` in the slack-free injection ordering, -1 for the slack.
  int injection_index(int bus) const;
  /// Inverse of injection_index(): bus ids in injection order (length N_b-1).
  std::vector<int> non_slack_buses() const;

  /// Buses carrying a PV plant / a load, ascending id. These fix the row
  /// order of every per-plant and per-load matrix in the library.
  std::vector<int> pv_buses() const;
  std::vector<int> load_buses() const;
  std::vector<PlantSpec> plants() const;

  double z_base_ohm() const { return v_base_v * v_base_v / (s_base_kva * 1e3); }
};

/// Checks every structural invariant; throws ValidationError naming the
/// first one violated.
void validate(const NetworkModel& net);

/// Parses the network JSON document (physical units) into a validated
/// per-unit model. Throws ParseError with line context on malformed JSON.
NetworkModel parse_network(std::string_view json_text);
NetworkModel load_network(const std::filesystem::path& path);

/// Serializes back to the JSON schema (physical units).
std::string network_to_json(const NetworkModel& net);

/// Nodal admittance matrix. Y(i,j) = -1/(r + jx) per branch (i,j); the
/// diagonal collects incident series admittances and half of each incident
/// branch's line charging.
Eigen::MatrixXcd build_ybus(const NetworkModel& net);

}  // namespace fairpv
