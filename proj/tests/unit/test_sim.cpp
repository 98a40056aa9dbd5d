#include <cmath>

#include "doctest.h"
#include "gestimate/error.hpp"
#include "gestimate/rng.hpp"
#include "gestimate/sim.hpp"
#include "oracles.hpp"

using namespace gestimate;

TEST_SUITE("sim") {
  TEST_CASE("generation is a function of the seed") {
    for (const auto& name : scenario_names()) {
      Scenario s = make_scenario(name);
      Generated a = generate(s, 60, 71), b = generate(s, 60, 71), c = generate(s, 60, 72);
      bool same = true, differs = false;
      for (std::size_t i = 0; i < 60; ++i) {
        same = same && a.panel.subject(i).a == b.panel.subject(i).a && a.panel.subject(i).l == b.panel.subject(i).l &&
               a.truth.baseline[i] == b.truth.baseline[i];
        differs = differs || a.truth.baseline[i] != c.truth.baseline[i];
      }
      CHECK_MESSAGE(same, name);
      CHECK_MESSAGE(differs, name);
    }
  }

  TEST_CASE("subject draws do not depend on the sample size") {
    Scenario s = make_scenario("seq-confounded");
    Generated small = generate(s, 10, 73), big = generate(s, 100, 73);
    for (std::size_t i = 0; i < 10; ++i) CHECK(small.truth.baseline[i] == big.truth.baseline[i]);
  }

  TEST_CASE("null scenario outcomes are the baselines") {
    Generated g = generate(make_scenario("null"), 300, 74);
    for (std::size_t i = 0; i < 300; ++i) {
      CHECK(g.panel.subject(i).y[1] == g.truth.baseline[i][0]);
      CHECK(g.panel.subject(i).y[2] == g.truth.baseline[i][1]);
    }
  }

  TEST_CASE("hidden-bias treatment follows the documented tilt") {
    Scenario s = make_scenario("hidden-bias");
    Generated g = generate(s, 1000000, 75);
    const Panel& p = g.panel;
    Eigen::MatrixXd X(p.n(), 3);
    Eigen::VectorXd a(p.n());
    for (std::size_t i = 0; i < p.n(); ++i) {
      X.row(i) << 1.0, p.subject(i).l[0][0], g.truth.baseline[i][0];
      a[i] = p.subject(i).a[0];
    }
    Eigen::VectorXd coef = oracle::logistic(X, a, 25);
    CHECK(std::abs(coef[0] - s.param("a0")) < 0.01);
    CHECK(std::abs(coef[1] - s.param("a1")) < 0.01);
    CHECK(std::abs(coef[2] - s.param("gamma")) < 0.01);
  }

  TEST_CASE("never-treat oracle matches the baseline mean") {
    Scenario s = make_scenario("seq-confounded");
    auto o = oracle_regime_mean(s, RegimeSpec::fixed(0, 0), 200000, 76);
    CHECK(std::abs(o.mean - 2.0) < 4 * o.se);
    auto o11 = oracle_regime_mean(s, RegimeSpec::fixed(1, 1), 200000, 77);
    CHECK(std::abs(o11.mean - 3.85) < 4 * o11.se);
  }

  TEST_CASE("scenario configuration errors") {
    CHECK_THROWS_AS(make_scenario("no-such-scenario"), ConfigError);
    CHECK_THROWS_AS(make_scenario("null", {{"bogus", 1.0}}), ConfigError);
    CHECK(make_scenario("point-confounded", {{"psi0", 2.5}}).psi[0] == 2.5);
  }

  TEST_CASE("derived seeds are stable and distinct") {
    CHECK(derive_seed(1, {2, 3}) == derive_seed(1, {2, 3}));
    CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
    CHECK(derive_seed(1, {2}) != derive_seed(2, {2}));
  }

  TEST_CASE("parallel loops cover every index once") {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) CHECK(h == 1);
  }

  TEST_CASE("monte carlo rows summarise the replications") {
    Scenario s = make_scenario("point-confounded");
    EstimatorSpec e{"const", [](const Generated& g) {
                      EstimateResult r;
                      r.psi = Eigen::VectorXd::Constant(1, g.panel.subject(0).y[1]);
                      r.cov = Eigen::MatrixXd::Constant(1, 1, 0.01);
                      return r;
                    },
                    {}};
    auto mc = monte_carlo(s, {e}, 5, 40, 78, 3);
    std::vector<double> vals;
    for (const auto& v : mc.estimates[0]) vals.push_back(v[0]);
    const auto& row = mc.row("const");
    CHECK(row.mean == doctest::Approx(oracle::mean(vals)).epsilon(1e-12));
    CHECK(row.sd == doctest::Approx(oracle::sd(vals)).epsilon(1e-12));
    CHECK(row.se_mc == doctest::Approx(oracle::sd(vals) / std::sqrt(40.0)).epsilon(1e-12));
    CHECK(row.coverage >= 0.0);
    CHECK(row.coverage <= 1.0);
  }
}
