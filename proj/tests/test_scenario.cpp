#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "fairpv/scenario.hpp"
#include "support/networks.hpp"

using namespace fairpv;
using fairpv::testing::chain;
using fairpv::testing::feeder_path;

namespace {

NetworkModel one_load_net(const std::string& profile) {
  NetworkModel net = chain(2, 0.01, 0.01);
  net.buses[1].load = LoadSpec{profile, 0.05, 0.95};
  return net;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fairpv_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("PV bell profile") {
  const std::vector<PlantSpec> plants{{0.1, 0.95}, {0.25, 0.9}};
  DayParams day;
  const auto hi = generate_pv_mpp(plants, Percentile::p90, day);
  const auto lo = generate_pv_mpp(plants, Percentile::p10, day);
  REQUIRE(hi.rows() == 2);
  REQUIRE(hi.cols() == 96);

  CHECK(hi.col(0).isZero());
  CHECK(hi.col(95).isZero());
  // solar noon halfway between sunrise 6:00 and sunset 20:00, step 52
  CHECK(hi(0, 52) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(hi(1, 52) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK((hi.array() >= 0.0).all());
  CHECK(hi.row(0).maxCoeff() <= 0.1);
  CHECK(lo.sum() / hi.sum() == doctest::Approx(0.35).epsilon(1e-12));

  day.peak_fraction = 0.8;
  CHECK(generate_pv_mpp(plants, Percentile::p90, day)(1, 52) == doctest::Approx(0.2));
  day.steps = 7;
  CHECK_THROWS_AS(generate_pv_mpp(plants, Percentile::p90, day), ValidationError);
}

TEST_CASE("demand model fit") {
  SUBCASE("identical days") {
    Eigen::MatrixXd hist(40, 6);
    for (int d = 0; d < 40; ++d) hist.row(d) << 1, 2, 3, 4, 5, 6;
    const auto m = fit_demand_model(hist, 2, 3);
    CHECK(m.mean.isApprox(hist.row(0).transpose()));
    CHECK(m.covariance.cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((m.covariance - Eigen::MatrixXd(m.covariance.diagonal().asDiagonal())).isZero());
    const auto hi = sample_demand(m, Percentile::p90), lo = sample_demand(m, Percentile::p10);
    CHECK((hi.load_p - lo.load_p).cwiseAbs().maxCoeff() <= 1e-5);
  }
  SUBCASE("too few days") {
    CHECK_THROWS_AS(fit_demand_model(Eigen::MatrixXd::Ones(29, 4), 1, 4), DegenerateHistory);
    CHECK_NOTHROW(fit_demand_model(Eigen::MatrixXd::Random(30, 4), 1, 4));
  }
  SUBCASE("covariance is symmetric and factorizable") {
    const auto net = load_network(feeder_path());
    const auto hist = synthesize_history(net, 24, HistoryParams{}, 3);
    const auto m = fit_demand_model(hist, static_cast<int>(net.load_buses().size()), 24);
    CHECK((m.covariance - m.covariance.transpose()).cwiseAbs().maxCoeff() == 0.0);
    const Eigen::MatrixXd l = m.cholesky;
    CHECK((l * l.transpose() - m.covariance).cwiseAbs().maxCoeff() <= 1e-12 * m.covariance.cwiseAbs().maxCoeff());
    CHECK(m.shrinkage == doctest::Approx(1e-6 * (m.covariance.trace() - m.covariance.rows() * m.shrinkage) /
                                         static_cast<double>(m.covariance.rows())));
  }
}

TEST_CASE("sampled days reproduce the AR(1) lag-one correlation") {
  const auto net = one_load_net("residential");
  HistoryParams hp;
  hp.day_sigma = 0.0;  // leaves the AR(1) noise as the only source of variation
  const int steps = 96;
  const auto model = fit_demand_model(synthesize_history(net, steps, hp, 5), 1, steps);
  const Eigen::VectorXd sigma = model.sigma();

  std::mt19937_64 rng(17);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (int s = 0; s < 1000; ++s) {
    const Eigen::VectorXd z = (model.sample_day(rng) - model.mean).cwiseQuotient(sigma);
    for (int t = 0; t + 1 < steps; ++t) {
      sxy += z(t) * z(t + 1);
      sxx += z(t) * z(t);
      syy += z(t + 1) * z(t + 1);
    }
  }
  const double lag1 = sxy / std::sqrt(sxx * syy);
  CHECK(std::abs(lag1 - hp.ar_coefficient) <= 0.1);
}

TEST_CASE("percentile envelope") {
  const auto net = load_network(feeder_path());
  const int steps = 48;
  const int n_loads = static_cast<int>(net.load_buses().size());
  const auto model = fit_demand_model(synthesize_history(net, steps, HistoryParams{}, 42), n_loads, steps);
  const auto hi = sample_demand(model, Percentile::p90);
  const auto lo = sample_demand(model, Percentile::p10);

  SUBCASE("width is 2 z sigma where unclipped") {
    const Eigen::VectorXd sigma = model.covariance.diagonal().cwiseSqrt();
    int checked = 0;
    for (int l = 0; l < n_loads; ++l)
      for (int t = 0; t < steps; ++t) {
        if (lo.load_p(l, t) <= 0.0) continue;
        ++checked;
        CHECK(hi.load_p(l, t) - lo.load_p(l, t) ==
              doctest::Approx(2.0 * 1.2815515655446004 * sigma(l * steps + t)).epsilon(1e-12));
      }
    CHECK(checked == n_loads * steps);
  }

  SUBCASE("reactive power follows the power factor") {
    const double ratio = std::sqrt(1.0 - 0.95 * 0.95) / 0.95;
    CHECK((hi.load_q - ratio * hi.load_p).cwiseAbs().maxCoeff() <= 1e-15);
  }

  SUBCASE("envelope brackets about 80% of held-out days") {
    const auto fresh = synthesize_history(net, steps, HistoryParams{}, 4242);
    long inside = 0, total = 0;
    for (Eigen::Index d = 0; d < fresh.rows(); ++d)
      for (int l = 0; l < n_loads; ++l)
        for (int t = 0; t < steps; ++t) {
          const double v = fresh(d, l * steps + t);
          inside += (v >= lo.load_p(l, t) && v <= hi.load_p(l, t)) ? 1 : 0;
          ++total;
        }
    CHECK(static_cast<double>(inside) / static_cast<double>(total) >= 0.78);
  }

  SUBCASE("zero variance model collapses the envelope") {
    DemandModel flat = model;
    flat.covariance.setZero();
    const auto a = sample_demand(flat, Percentile::p90), b = sample_demand(flat, Percentile::p10);
    CHECK(a.load_p == b.load_p);
    CHECK(a.load_p(0, 5) == model.mean(5));
  }
}

TEST_CASE("extreme coupling is a pure rearrangement") {
  const Eigen::MatrixXd pv_hi = Eigen::MatrixXd::Constant(2, 4, 0.2), pv_lo = Eigen::MatrixXd::Constant(2, 4, 0.1);
  DemandProfile hi{Eigen::MatrixXd::Constant(1, 4, 3.0), Eigen::MatrixXd::Constant(1, 4, 1.0)};
  DemandProfile lo{Eigen::MatrixXd::Constant(1, 4, 2.0), Eigen::MatrixXd::Constant(1, 4, 0.5)};
  const auto s = couple_extremes(pv_hi, pv_lo, hi, lo);
  REQUIRE(s.n_scenarios() == 2);
  CHECK(s.steps == 4);
  CHECK(s.timestep_minutes == 360);
  CHECK(s.scenarios[0].pv_mpp == pv_hi);
  CHECK(s.scenarios[0].load_p == lo.load_p);
  CHECK(s.scenarios[0].load_q == lo.load_q);
  CHECK(s.scenarios[1].pv_mpp == pv_lo);
  CHECK(s.scenarios[1].load_p == hi.load_p);
  CHECK(s.scenarios[1].load_q == hi.load_q);
  CHECK_THROWS_AS(couple_extremes(pv_hi, Eigen::MatrixXd::Zero(2, 3), hi, lo), ValidationError);
}

TEST_CASE("shipped feeder scenarios") {
  const auto net = load_network(feeder_path());
  SynthesisParams params;
  const auto scen = synthesize_scenarios(net, params);
  REQUIRE(scen.n_scenarios() == 2);
  CHECK(scen.steps == 96);
  CHECK(scen.scenarios[0].pv_mpp.sum() >= scen.scenarios[1].pv_mpp.sum());
  CHECK(scen.scenarios[1].load_p.sum() >= scen.scenarios[0].load_p.sum());
  for (const auto& s : scen.scenarios) {
    CHECK((s.pv_mpp.array() >= 0.0).all());
    CHECK((s.load_p.array() >= 0.0).all());
  }

  SUBCASE("noon of the stress scenario over-voltages without curtailment") {
    const Eigen::VectorXd q = Eigen::VectorXd::Zero(scen.n_pv());
    const auto sol = solve_pf(net, assemble_injections(net, scen, 0, 52, scen.scenarios[0].pv_mpp.col(52), q));
    CHECK(sol.v_mag.maxCoeff() > 1.05);
  }

  SUBCASE("same seed, same scenarios") {
    const auto again = synthesize_scenarios(net, params);
    CHECK(again.scenarios[1].load_p == scen.scenarios[1].load_p);
    params.seed = 43;
    CHECK(synthesize_scenarios(net, params).scenarios[1].load_p != scen.scenarios[1].load_p);
  }

  SUBCASE("csv round trip is bit exact") {
    const auto dir = scratch_dir("scen");
    save_scenarios(scen, dir, Provenance{"0123456789abcdef", 42});
    const auto back = load_scenarios(dir);
    CHECK(back.pv_buses == scen.pv_buses);
    CHECK(back.load_buses == scen.load_buses);
    CHECK(back.timestep_minutes == 15);
    for (int w = 0; w < 2; ++w) {
      CHECK(back.scenarios[w].pv_mpp == scen.scenarios[w].pv_mpp);
      CHECK(back.scenarios[w].load_p == scen.scenarios[w].load_p);
      CHECK(back.scenarios[w].load_q == scen.scenarios[w].load_q);
    }
    CHECK_NOTHROW(validate(back, net));
    std::filesystem::remove_all(dir);
  }

  SUBCASE("validation catches bad data") {
    auto bad = scen;
    bad.scenarios[0].pv_mpp(0, 50) = 1.0;
    CHECK_THROWS_AS(validate(bad, net), ValidationError);
    bad = scen;
    bad.scenarios[1].load_p(2, 3) = -0.01;
    CHECK_THROWS_AS(validate(bad, net), ValidationError);
  }
}

TEST_CASE("unknown load shape is rejected") {
  CHECK_THROWS_AS(synthesize_history(one_load_net("industrial"), 24, HistoryParams{}, 1), ValidationError);
}

TEST_CASE("loader rejects malformed scenario files") {
  const auto dir = scratch_dir("scen_bad");
  std::filesystem::create_directories(dir);
  CHECK_THROWS_AS(load_scenarios(dir), Error);
  CHECK_THROWS_WITH(load_scenarios(dir / "missing"), doctest::Contains("scenario directory not found"));
  std::filesystem::remove_all(dir);
}
