#include <doctest.h>

#include <random>
#include <sstream>

#include "fairpv/lp.hpp"
#include "support/lp_oracle.hpp"

using namespace fairpv;
using fairpv::testing::OracleResult;

TEST_CASE("x >= 3 with x free below") {
  LPProblem lp;
  const int x = lp.add_variable(-kInf, kInf, 1.0, "x");
  lp.add_row({{x, 1.0}}, Sense::ge, 3.0);
  const auto sol = solve_lp(lp);
  REQUIRE(sol.status == LPStatus::optimal);
  CHECK(sol.x(0) == doctest::Approx(3.0));
  CHECK(sol.objective == doctest::Approx(3.0));
  CHECK(check_feasibility(lp, Eigen::VectorXd::Zero(1)) == doctest::Approx(3.0));
}

TEST_CASE("face optimum of a 2D LP") {
  // maximize p + q  ->  minimize -(p + q)
  LPProblem lp;
  const int p = lp.add_variable(0.0, kInf, -1.0, "p");
  const int q = lp.add_variable(0.0, kInf, -1.0, "q");
  lp.add_row({{p, 1.0}}, Sense::le, 1.0);
  lp.add_row({{q, 1.0}}, Sense::le, 1.0);
  lp.add_row({{p, 1.0}, {q, 1.0}}, Sense::le, 1.5);
  const auto sol = solve_lp(lp);
  REQUIRE(sol.status == LPStatus::optimal);
  CHECK(-sol.objective == doctest::Approx(1.5));
  CHECK(check_feasibility(lp, sol.x) <= 1e-7);

  // perturbing the optimum along the tight p + q row breaks feasibility
  Eigen::VectorXd bumped = sol.x;
  bumped(0) += 1e-3;
  CHECK(check_feasibility(lp, bumped) > 1e-4);
}

TEST_CASE("equality rows and bound flips") {
  LPProblem lp;
  const int a = lp.add_variable(0.0, 2.0, -1.0);
  const int b = lp.add_variable(0.0, 2.0, -2.0);
  const int c = lp.add_variable(-1.0, 1.0, 0.5);
  lp.add_row({{a, 1.0}, {b, 1.0}, {c, 1.0}}, Sense::eq, 2.5);
  const auto sol = solve_lp(lp);
  REQUIRE(sol.status == LPStatus::optimal);
  // b = 2, then a = 1.5 (c at lower costs -0.5 but lets a grow by 1: net -0.5)
  CHECK(sol.x(b) == doctest::Approx(2.0));
  CHECK(sol.x(a) == doctest::Approx(1.5));
  CHECK(sol.x(c) == doctest::Approx(-1.0));
  CHECK(check_feasibility(lp, sol.x) <= 1e-7);
}

TEST_CASE("infeasible and unbounded detection") {
  SUBCASE("contradictory rows") {
    LPProblem lp;
    const int x = lp.add_variable(0.0, kInf, 1.0);
    lp.add_row({{x, 1.0}}, Sense::ge, 2.0);
    lp.add_row({{x, 1.0}}, Sense::le, 1.0);
    CHECK(solve_lp(lp).status == LPStatus::infeasible);
  }
  SUBCASE("ray along a free variable") {
    LPProblem lp;
    const int x = lp.add_variable(-kInf, kInf, 1.0);
    const int y = lp.add_variable(0.0, 1.0, 0.0);
    lp.add_row({{x, 1.0}, {y, 1.0}}, Sense::le, 4.0);
    CHECK(solve_lp(lp).status == LPStatus::unbounded);
  }
}

TEST_CASE("malformed problems are rejected") {
  LPProblem lp;
  lp.add_variable(1.0, 0.0, 0.0);
  CHECK_THROWS_AS(solve_lp(lp), ValidationError);
  LPProblem lp2;
  lp2.add_variable(0.0, 1.0, 0.0);
  lp2.add_row({{3, 1.0}}, Sense::le, 1.0);
  CHECK_THROWS_AS(solve_lp(lp2), ValidationError);
}

TEST_CASE("iteration cap") {
  LPProblem lp;
  const int p = lp.add_variable(0.0, kInf, -1.0);
  const int q = lp.add_variable(0.0, kInf, -1.0);
  lp.add_row({{p, 1.0}, {q, 2.0}}, Sense::le, 4.0);
  lp.add_row({{p, 3.0}, {q, 1.0}}, Sense::le, 6.0);
  SimplexOptions opts;
  opts.max_iterations = 1;
  CHECK_THROWS_AS(solve_lp(lp, opts), IterationLimit);
}

TEST_CASE("objective matches vertex enumeration on random bounded LPs") {
  std::mt19937_64 rng(20240611);
  int checked = 0;
  while (checked < 200) {
    const LPProblem lp = fairpv::testing::random_lp(rng, true, 0.0);
    const OracleResult expect = fairpv::testing::vertex_oracle(lp);
    REQUIRE(expect.kind == OracleResult::optimal);
    const LPSolution got = solve_lp(lp);
    REQUIRE(got.status == LPStatus::optimal);
    CHECK(std::abs(got.objective - expect.objective) <= 1e-6);
    CHECK(check_feasibility(lp, got.x) <= 1e-7);
    ++checked;
  }
}

TEST_CASE("status classification matches the oracle") {
  std::mt19937_64 rng(7);
  int infeasible = 0, unbounded = 0, tries = 0;
  while ((infeasible < 100 || unbounded < 100) && tries < 20000) {
    ++tries;
    const bool want_unbounded = unbounded < 100 && (tries % 2 == 0 || infeasible >= 100);
    const LPProblem lp = fairpv::testing::random_lp(rng, want_unbounded, want_unbounded ? 0.7 : 0.0);
    const OracleResult expect = fairpv::testing::vertex_oracle(lp);
    const LPSolution got = solve_lp(lp);
    switch (expect.kind) {
      case OracleResult::infeasible:
        CHECK(got.status == LPStatus::infeasible);
        ++infeasible;
        break;
      case OracleResult::unbounded:
        CHECK(got.status == LPStatus::unbounded);
        ++unbounded;
        break;
      case OracleResult::optimal:
        REQUIRE(got.status == LPStatus::optimal);
        CHECK(std::abs(got.objective - expect.objective) <= 1e-6);
        break;
    }
  }
  CHECK(infeasible >= 100);
  CHECK(unbounded >= 100);
}

TEST_CASE("identical inputs give bitwise identical solutions") {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 20; ++i) {
    const LPProblem lp = fairpv::testing::random_lp(rng, true, 0.3);
    const auto a = solve_lp(lp);
    const auto b = solve_lp(lp);
    CHECK(a.status == b.status);
    CHECK(a.iterations == b.iterations);
    CHECK((a.x.array() == b.x.array()).all());
  }
}

TEST_CASE("degenerate problem terminates under the Bland fallback") {
  // Beale's classic cycling example for Dantzig's rule with a tiny fallback threshold.
  LPProblem lp;
  const int x1 = lp.add_variable(0.0, kInf, -0.75);
  const int x2 = lp.add_variable(0.0, kInf, 150.0);
  const int x3 = lp.add_variable(0.0, kInf, -0.02);
  const int x4 = lp.add_variable(0.0, kInf, 6.0);
  lp.add_row({{x1, 0.25}, {x2, -60.0}, {x3, -0.04}, {x4, 9.0}}, Sense::le, 0.0);
  lp.add_row({{x1, 0.5}, {x2, -90.0}, {x3, -0.02}, {x4, 3.0}}, Sense::le, 0.0);
  lp.add_row({{x3, 1.0}}, Sense::le, 1.0);
  SimplexOptions opts;
  opts.bland_after = 2;
  const auto sol = solve_lp(lp, opts);
  REQUIRE(sol.status == LPStatus::optimal);
  CHECK(sol.objective == doctest::Approx(-0.05));
}

TEST_CASE("text dump names variables and rows") {
  LPProblem lp;
  const int p = lp.add_variable(0.0, 1.0, -1.0, "p[0]");
  lp.add_row({{p, 2.0}}, Sense::le, 1.0, "cap");
  std::ostringstream os;
  dump_lp(lp, os);
  CHECK(os.str().find("cap: + 2 p[0] <= 1") != std::string::npos);
  CHECK(os.str().find("minimize - 1 p[0]") != std::string::npos);
}
