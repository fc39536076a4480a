#pragma once

// Shipped feeder on a 24-step day with a 2000-sample CLA model, built once
// per test binary.

#include "fairpv/cla.hpp"
#include "fairpv/scenario.hpp"
#include "support/networks.hpp"

namespace fairpv::testing {

struct FeederFixture {
  NetworkModel net = load_network(feeder_path());
  ScenarioSet scen;
  CLAModel cla;

  FeederFixture() {
    SynthesisParams p;
    p.day.steps = 24;
    scen = synthesize_scenarios(net, p);
    cla = build_cla(sample_injections(net, scen, 2000, 42));
  }
};

inline const FeederFixture& feeder() {
  static const FeederFixture f;
  return f;
}

}  // namespace fairpv::testing
