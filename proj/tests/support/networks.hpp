#pragma once

// Small hand-built networks shared by the unit tests.

#include <string>
#include <vector>

#include "fairpv/grid.hpp"

namespace fairpv::testing {

inline std::string feeder_path() { return std::string(FAIRPV_DATA_DIR) + "/feeder19.json"; }

/// Slack bus 0 feeding a radial chain 0-1-...-(n-1), per-unit impedances.
inline NetworkModel chain(int n, double r, double x) {
  NetworkModel net;
  for (int i = 0; i < n; ++i) {
    Bus b;
    b.id = i;
    b.kind = i == 0 ? BusKind::slack : BusKind::pq;
    net.buses.push_back(b);
  }
  for (int i = 1; i < n; ++i) net.branches.push_back({i - 1, i, r, x, 0.0});
  return net;
}

/// Two-bus network with one PV plant on bus 1 and no load.
inline NetworkModel two_bus_pv(double r, double x, double s_max, double pf_min = 0.95) {
  NetworkModel net = chain(2, r, x);
  net.buses[1].pv_plant = PlantSpec{s_max, pf_min};
  return net;
}

}  // namespace fairpv::testing
