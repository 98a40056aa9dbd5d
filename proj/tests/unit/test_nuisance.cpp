#include <cmath>

#include "doctest.h"
#include "gestimate/error.hpp"
#include "gestimate/nuisance.hpp"
#include "gestimate/sim.hpp"
#include "oracles.hpp"

using namespace gestimate;

TEST_SUITE("nuisance") {
  TEST_CASE("logistic propensity matches an independent Newton fit") {
    Generated g = generate(make_scenario("seq-confounded"), 3000, 21);
    const Panel& p = g.panel;
    auto fm = FeatureMap::parse_per_time({{"1", "L"}, {"1", "L", "A[0]"}}, p.symbols());
    auto fit = fit_propensity(p, fm);
    for (int m = 0; m < 2; ++m) {
      Eigen::MatrixXd X(p.n(), m == 0 ? 2 : 3);
      Eigen::VectorXd a(p.n());
      for (std::size_t i = 0; i < p.n(); ++i) {
        const auto& r = p.subject(i);
        if (m == 0)
          X.row(i) << 1.0, r.l[0][0];
        else
          X.row(i) << 1.0, r.l[1][0], r.a[0];
        a[i] = r.a[m];
      }
      Eigen::VectorXd want = oracle::logistic(X, a);
      CHECK((fit.at(m).alpha - want).cwiseAbs().maxCoeff() < 1e-8);
      HistoryView h(p, p.subject(0), m);
      double eta = X.row(0).dot(want);
      CHECK(fit.predict(h) == doctest::Approx(1.0 / (1.0 + std::exp(-eta))).epsilon(1e-9));
    }
  }

  TEST_CASE("gaussian propensity is least squares") {
    Generated g = generate(make_scenario("point-confounded"), 500, 22);
    const Panel& p = g.panel;
    auto fit = fit_propensity(p, FeatureMap::parse({"1", "L"}, p.symbols()), Family::gaussian_identity);
    Eigen::MatrixXd X(p.n(), 2);
    Eigen::VectorXd a(p.n());
    for (std::size_t i = 0; i < p.n(); ++i) {
      X.row(i) << 1.0, p.subject(i).l[0][0];
      a[i] = p.subject(i).a[0];
    }
    CHECK((fit.at(0).alpha - oracle::ols(X, a)).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("propensity features never see the current treatment") {
    Generated g = generate(make_scenario("point-confounded"), 50, 23);
    auto fm = FeatureMap::parse({"1", "A"}, g.panel.symbols());
    CHECK_THROWS(fit_propensity(g.panel, fm));
  }

  TEST_CASE("tilting by zero is the identity") {
    for (double p : {0.01, 0.3, 0.5, 0.97}) {
      CHECK(tilted_propensity(p, 0.0) == doctest::Approx(p).epsilon(1e-15));
      CHECK(tilted_propensity(p, 1.0) > p);
      CHECK(tilted_propensity(p, -1.0) < p);
    }
  }

  TEST_CASE("overlap summary counts every subject once per time") {
    Generated g = generate(make_scenario("near-positivity"), 400, 24);
    auto fit = fit_propensity(g.panel, FeatureMap::parse({"1", "L"}, g.panel.symbols()));
    auto rep = summarize_overlap(g.panel, fit, 0.05);
    REQUIRE(rep.times.size() == 1);
    std::size_t total = 0;
    for (const auto& b : rep.times[0].propensity_histogram) total += b.count;
    CHECK(total == 400);
    CHECK(rep.any_flagged());
  }
}

TEST_SUITE("nuisance") {
  TEST_CASE("propensity coefficients are unbiased for the generator") {
    Scenario s = make_scenario("point-confounded");
    std::vector<double> a0, a1;
    for (std::uint64_t r = 0; r < 100; ++r) {
      Generated g = generate(s, 5000, 2500 + r);
      auto fit = fit_propensity(g.panel, FeatureMap::parse({"1", "L"}, g.panel.symbols()));
      a0.push_back(fit.at(0).alpha[0]);
      a1.push_back(fit.at(0).alpha[1]);
    }
    CHECK(std::abs(oracle::mean(a0) - s.param("a0")) < 3 * oracle::sd(a0) / 10.0);
    CHECK(std::abs(oracle::mean(a1) - s.param("a1")) < 3 * oracle::sd(a1) / 10.0);
  }

  TEST_CASE("working-model residuals are orthogonal to their features") {
    Scenario s = make_scenario("seq-confounded");
    Generated g = generate(s, 2000, 25);
    const Panel& p = g.panel;
    auto sym = p.symbols();
    auto term = [&](int m, const char* e, int j) { return BlipTerm{2, m, Expression::parse(e, sym), j}; };
    BlipSpec spec(Link::identity,
                  {term(1, "A", 0), term(1, "L*A", 1), term(1, "A[0]*A", 2), term(0, "A", 3), term(0, "L*A", 4)}, 5);
    auto fm = FeatureMap::parse_per_time({{"1", "L"}, {"1", "L", "A[0]", "L[0]", "L[0]*A[0]"}}, sym);
    auto fit = fit_outcome_working(p, spec, s.psi, fm);
    for (const auto& slot : fit.slots) {
      Eigen::MatrixXd X = history_design(p, fm, slot.m, slot.rows);
      Eigen::VectorXd resid = slot.response - slot.fitted;
      CHECK((X.transpose() * resid).cwiseAbs().maxCoeff() / double(slot.rows.size()) < 1e-10);
    }
  }

  TEST_CASE("separation is reported") {
    Generated g = generate(make_scenario("point-confounded"), 300, 26);
    std::vector<SubjectRecord> recs = g.panel.subjects();
    for (auto& r : recs) r.a[0] = r.l[0][0] > 0;
    Panel p(g.panel.layout(), recs);
    CHECK_THROWS_AS(fit_propensity(p, FeatureMap::parse({"1", "L"}, p.symbols())), NumericalError);
  }
}
