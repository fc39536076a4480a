#include <doctest.h>

#include <random>

#include "fairpv/analysis.hpp"
#include "support/feeder_fixture.hpp"

using namespace fairpv;
using fairpv::testing::feeder;

namespace {

struct Solved {
  CurtailmentPlan unfair, fair;
  Solved() {
    const auto& f = feeder();
    OptimizerConfig cfg;
    unfair = solve_plan(build_day_ahead_lp(f.net, f.cla, f.scen, cfg));
    cfg.alpha2 = 7.0;
    fair = solve_plan(build_day_ahead_lp(f.net, f.cla, f.scen, cfg));
  }
};

const Solved& solved() {
  static const Solved s;
  return s;
}

}  // namespace

TEST_CASE("Jain's index") {
  CHECK(jain_index(Eigen::VectorXd::Constant(5, 0.7)) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(jain_index(Eigen::Vector4d(1, 0, 0, 0)) == 0.25);
  CHECK(jain_index(Eigen::VectorXd(0)) == 1.0);
  CHECK(jain_index(Eigen::VectorXd::Zero(3)) == 1.0);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 12);
  for (int k = 0; k < 500; ++k) {
    Eigen::VectorXd b(len(rng));
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = u(rng);
    b(0) += 1e-3;  // non-zero vector
    const double j = jain_index(b);
    const double n = static_cast<double>(b.size());
    CHECK(j >= 1.0 / n - 1e-15);
    CHECK(j <= 1.0 + 1e-15);
    if (b.size() > 1 && b.maxCoeff() - b.minCoeff() > 1e-6) CHECK(j < 1.0);
    const double c = 0.01 + 100.0 * u(rng);
    CHECK(std::abs(jain_index(Eigen::VectorXd(c * b)) - j) <= 1e-12);
    // the lower bound is reached by a single non-zero entry
    Eigen::VectorXd spike = Eigen::VectorXd::Zero(b.size());
    spike(0) = c;
    CHECK(jain_index(spike) == doctest::Approx(1.0 / n).epsilon(1e-14));
  }
}

TEST_CASE("fairness metrics of a plan") {
  const auto& f = feeder();
  const auto& s = solved();
  const auto unfair = compute_fairness(s.unfair, f.scen);
  const auto fair = compute_fairness(s.fair, f.scen);

  SUBCASE("net curtailment equals the energy-weighted share identity") {
    for (const auto* r : {&unfair, &fair})
      for (int w = 0; w < 2; ++w) {
        const auto& sf = r->scenarios[static_cast<std::size_t>(w)];
        const Eigen::VectorXd energy = f.scen.scenarios[static_cast<std::size_t>(w)].pv_mpp.rowwise().sum();
        const Eigen::VectorXd weight = energy / energy.sum();
        double produced = 0.0;
        for (std::size_t i = 0; i < sf.plants.size(); ++i)
          produced += sf.beta(static_cast<Eigen::Index>(i)) * weight(sf.plants[i]);
        CHECK(std::abs(sf.net_curtailment_pct - 100.0 * (1.0 - produced)) <= 1e-9);
        CHECK(sf.net_curtailment_pct >= 0.0);
        CHECK(sf.net_curtailment_pct <= 100.0);
        const double n = static_cast<double>(sf.beta.size());
        CHECK(sf.jfi >= 1.0 / n);
        CHECK(sf.jfi <= 1.0 + 1e-15);
      }
  }

  SUBCASE("headline numbers come from the stress scenario") {
    CHECK(unfair.stress_scenario == 0);
    CHECK(unfair.jfi() == unfair.scenarios[0].jfi);
    CHECK(unfair.beta().size() == f.scen.n_pv());
    CHECK(compute_fairness(s.unfair, f.scen, 1).jfi() == unfair.scenarios[1].jfi);
    CHECK_THROWS_AS(compute_fairness(s.unfair, f.scen, 2), ValidationError);
  }

  SUBCASE("fairness weight trades curtailment for equal shares") {
    CHECK(fair.jfi() >= 0.999);
    CHECK(fair.jfi() > unfair.jfi());
    CHECK(fair.net_curtailment_pct() >= unfair.net_curtailment_pct());
  }

  SUBCASE("json report") {
    const auto text = fairness_to_json(fair, s.fair, Provenance{"0123456789abcdef", 42});
    CHECK(text.find("\"config_hash\": \"0123456789abcdef\"") != std::string::npos);
    CHECK(text.find("\"jfi\"") != std::string::npos);
    CHECK(text.find("\"net_curtailment_pct\"") != std::string::npos);
  }
}

TEST_CASE("AC validation of optimized plans") {
  const auto& f = feeder();
  const auto& s = solved();
  for (const auto* plan : {&s.unfair, &s.fair}) {
    const auto v = validate_plan(*plan, f.net, f.cla, f.scen);
    CHECK(v.failures.empty());
    CHECK(v.points.size() == static_cast<std::size_t>(24 * 2 * 18));
    CHECK(v.max_v <= 1.05 + 5e-3);
    CHECK(v.ok());
    CHECK(v.n_inverted == 0);
    CHECK(v.n_cla_above_limit == 0);
    for (const auto* e : {&v.over_error, &v.under_error}) {
      CHECK(std::abs(e->min) <= 1e-2);
      CHECK(std::abs(e->max) <= 1e-2);
    }
    for (const auto& p : v.points) {
      CHECK(p.v_under <= p.v_over);
      CHECK(p.v_over <= f.net.v_max + 1e-6);
      if (p.t < 6 || p.t >= 20) {  // before sunrise, after sunset
        CHECK(p.v_true <= f.net.v_max);
        CHECK(p.v_true >= f.net.v_min);
      }
    }
  }
  CHECK(max_v_uncurtailed(f.net, f.scen, 0) > 1.05);
}

TEST_CASE("reloaded plans validate identically") {
  const auto& f = feeder();
  const auto& s = solved();
  const Provenance prov{"0123456789abcdef", 42};
  const auto back = plan_from_json(plan_to_json(s.fair, f.net, OptimizerConfig{}, prov), f.net);
  CHECK(validation_stats_csv(validate_plan(back, f.net, f.cla, f.scen), prov) ==
        validation_stats_csv(validate_plan(s.fair, f.net, f.cla, f.scen), prov));
  const auto csv = voltages_csv(validate_plan(back, f.net, f.cla, f.scen), prov);
  CHECK(csv.find("\nt,scenario,node,v_true,v_over,v_under,v_min,v_max\n") != std::string::npos);
}

TEST_CASE("alpha2 sweep") {
  const auto& f = feeder();
  OptimizerConfig cfg;

  SUBCASE("single zero point matches the standalone solve") {
    const auto rows = sweep_alpha2({0.0}, f.net, f.cla, f.scen, cfg);
    REQUIRE(rows.size() == 1);
    REQUIRE(rows[0].ok);
    const auto fair = compute_fairness(solved().unfair, f.scen);
    CHECK(rows[0].jfi == fair.jfi());
    CHECK(rows[0].net_curtailment_pct == fair.net_curtailment_pct());
    CHECK(rows[0].objective == solved().unfair.objective);
  }

  SUBCASE("JFI rises to saturation") {
    std::vector<double> alphas;
    for (int i = 0; i <= 10; ++i) alphas.push_back(i);
    const auto rows = sweep_alpha2(alphas, f.net, f.cla, f.scen, cfg);
    REQUIRE(rows.size() == 11);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      REQUIRE(rows[i].ok);
      if (i > 0) CHECK(rows[i].jfi >= rows[i - 1].jfi - 1e-3);
    }
    CHECK(rows.back().jfi >= 0.999);
    const auto csv = sweep_to_csv(rows, Provenance{"0123456789abcdef", 42});
    CHECK(csv.find("alpha2,status,jfi,net_curtailment_pct,objective\n") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
  }

  SUBCASE("bad lists") {
    CHECK_THROWS_AS(sweep_alpha2({}, f.net, f.cla, f.scen, cfg), ValidationError);
    CHECK_THROWS_AS(sweep_alpha2({-1.0}, f.net, f.cla, f.scen, cfg), ValidationError);
    CHECK_THROWS_AS(sweep_alpha2({2.0, 1.0}, f.net, f.cla, f.scen, cfg), ValidationError);
  }

  SUBCASE("failed points are marked") {
    SweepRow bad;
    bad.alpha2 = 3.0;
    bad.error = "no luck, at all";
    const auto csv = sweep_to_csv({bad}, Provenance{"0123456789abcdef", 42});
    CHECK(csv.find("\n3,failed: no luck; at all,,,\n") != std::string::npos);
  }
}
