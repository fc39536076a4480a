#include <doctest.h>

#include <complex>
#include <string>

#include "fairpv/grid.hpp"
#include "support/networks.hpp"

using namespace fairpv;
using fairpv::testing::chain;
using fairpv::testing::feeder_path;

namespace {

const char* kThreeBus = R"({
  "s_base_kva": 400, "v_base_v": 400, "v_min_pu": 0.95, "v_max_pu": 1.05,
  "buses": [
    {"id": 0, "kind": "slack"},
    {"id": 1, "kind": "pq", "pv": {"s_max_kva": 40, "pf_min": 0.9}},
    {"id": 2, "kind": "pq", "load_profile_ref": "residential", "load_peak_kw": 8}
  ],
  "branches": [
    {"from": 0, "to": 1, "r_ohm": 0.04, "x_ohm": 0.02, "b_uS": 0},
    {"from": 1, "to": 2, "r_ohm": 0.08, "x_ohm": 0.04, "b_uS": 10}
  ]
})";

std::string error_of(const std::string& text) {
  try {
    parse_network(text);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const auto pos = s.find(from);
  REQUIRE(pos != std::string::npos);
  return s.replace(pos, from.size(), to);
}

}  // namespace

TEST_CASE("three-bus feeder parses into per-unit") {
  const auto net = parse_network(kThreeBus);
  CHECK(net.n_buses() == 3);
  CHECK(net.slack() == 0);
  CHECK(net.z_base_ohm() == doctest::Approx(0.4));
  CHECK(net.branches[0].r == doctest::Approx(0.1));
  CHECK(net.branches[1].x == doctest::Approx(0.1));
  CHECK(net.branches[1].b_shunt == doctest::Approx(10e-6 * 0.4));
  REQUIRE(net.buses[1].pv_plant);
  CHECK(net.buses[1].pv_plant->s_max == doctest::Approx(0.1));
  CHECK(net.buses[1].pv_plant->zeta() == doctest::Approx(std::sqrt(1.0 - 0.81) / 0.9));
  REQUIRE(net.buses[2].load);
  CHECK(net.buses[2].load->peak_p == doctest::Approx(0.02));
  CHECK(net.pv_buses() == std::vector<int>{1});
  CHECK(net.load_buses() == std::vector<int>{2});
  CHECK(net.injection_index(0) == -1);
  CHECK(net.injection_index(2) == 1);
  CHECK(net.non_slack_buses() == std::vector<int>{1, 2});
}

TEST_CASE("loader rejects invariant violations by name") {
  const std::string base = kThreeBus;
  CHECK(error_of(replace(base, R"("b_uS": 10})", R"("b_uS": 10}, {"from": 2, "to": 0, "r_ohm": 0.1, "x_ohm": 0.1})")) ==
        "network not radial");
  CHECK(error_of(replace(base, R"({"id": 1, "kind": "pq", "pv": {"s_max_kva": 40, "pf_min": 0.9}})",
                         R"({"id": 1, "kind": "slack"})")) == "two slack buses");
  CHECK(error_of(replace(base, R"("v_min_pu": 0.95)", R"("v_min_pu": 1.01)")).find("v_min < 1 < v_max") !=
        std::string::npos);
  CHECK(error_of(replace(base, R"("pf_min": 0.9)", R"("pf_min": 1.2)")).find("pf_min") != std::string::npos);
  CHECK(error_of(replace(base, R"("r_ohm": 0.04, "x_ohm": 0.02)", R"("r_ohm": 0, "x_ohm": 0)")) ==
        "branch has zero impedance");
  CHECK(error_of(replace(base, R"({"id": 0, "kind": "slack"})", R"({"id": 0, "kind": "slack", "pv": {"s_max_kva": 1, "pf_min": 1}})")) ==
        "slack bus cannot carry a PV plant or load");
}

TEST_CASE("cycle 1-2-3-1 is not radial") {
  NetworkModel net = chain(4, 0.01, 0.01);
  net.branches.push_back({3, 1, 0.01, 0.01, 0.0});
  CHECK_THROWS_WITH_AS(validate(net), "network not radial", ValidationError);
}

TEST_CASE("disconnected network is rejected") {
  NetworkModel net = chain(4, 0.01, 0.01);
  net.branches.back() = {1, 2, 0.01, 0.01, 0.0};
  CHECK_THROWS_AS(validate(net), ValidationError);
}

TEST_CASE("malformed JSON reports the line") {
  const std::string text = "{\n  \"s_base_kva\": 400,\n  \"v_base_v\": ,\n}";
  const auto msg = error_of(text);
  CHECK(msg.find("line 3") != std::string::npos);
  CHECK_THROWS_AS(parse_network(text), ParseError);
  CHECK_THROWS_WITH(load_network("/nonexistent/net.json"), "network file not found: /nonexistent/net.json");
}

TEST_CASE("json round trip preserves the model") {
  const auto net = parse_network(kThreeBus);
  const auto again = parse_network(network_to_json(net));
  CHECK(again.n_buses() == net.n_buses());
  for (std::size_t i = 0; i < net.branches.size(); ++i) {
    CHECK(again.branches[i].r == doctest::Approx(net.branches[i].r).epsilon(1e-14));
    CHECK(again.branches[i].b_shunt == doctest::Approx(net.branches[i].b_shunt).epsilon(1e-14));
  }
  CHECK(again.buses[2].load->profile_ref == "residential");
}

TEST_CASE("ybus of a single reactive branch") {
  const auto y = build_ybus(chain(2, 0.0, 1.0));
  CHECK(std::abs(y(0, 1) - std::complex<double>(0.0, 1.0)) < 1e-15);
  CHECK(std::abs(y(0, 0) - std::complex<double>(0.0, -1.0)) < 1e-15);
}

TEST_CASE("parallel identical branches double the off-diagonal") {
  NetworkModel one = chain(2, 0.3, 0.4);
  NetworkModel two = one;
  two.branches.push_back(two.branches.front());
  const auto y1 = build_ybus(one), y2 = build_ybus(two);
  CHECK(std::abs(y2(0, 1) - 2.0 * y1(0, 1)) < 1e-14);
}

TEST_CASE("shipped feeder") {
  const auto net = load_network(feeder_path());
  CHECK(net.n_buses() == 19);
  CHECK(net.pv_buses().size() == 9);
  CHECK(static_cast<int>(net.branches.size()) == net.n_buses() - 1);

  SUBCASE("ybus matches an element-by-element assembly") {
    const auto y = build_ybus(net);
    const int n = net.n_buses();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        std::complex<double> expect = 0.0;
        for (const auto& br : net.branches) {
          const std::complex<double> ys = 1.0 / std::complex<double>(br.r, br.x);
          const bool touches_i = br.from_bus == i || br.to_bus == i;
          if (i == j && touches_i) expect += ys + std::complex<double>(0.0, br.b_shunt / 2.0);
          if (i != j && ((br.from_bus == i && br.to_bus == j) || (br.from_bus == j && br.to_bus == i))) expect -= ys;
        }
        CHECK(std::abs(y(i, j) - expect) <= 1e-9 * std::max(1.0, std::abs(expect)));
      }
  }

  SUBCASE("ybus symmetric, zero row sums without shunts") {
    NetworkModel bare = net;
    for (auto& br : bare.branches) br.b_shunt = 0.0;
    const auto y = build_ybus(bare);
    CHECK((y - y.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(y.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-12);
  }
}
