#include <cmath>
#include <random>

#include "doctest.h"
#include "gestimate/error.hpp"
#include "gestimate/gest.hpp"
#include "gestimate/rng.hpp"
#include "gestimate/sim.hpp"
#include "oracles.hpp"

using namespace gestimate;

namespace {

struct PointFit {
  BlipSpec spec;
  PropensityFit prop;
  OutcomeModel out;
};

PointFit point_fit(const Panel& p) {
  auto s = p.symbols();
  auto fm = FeatureMap::parse({"1", "L"}, s);
  return {BlipSpec(Link::identity, {BlipTerm{1, 0, Expression::parse("A", s), 0}}, 1), fit_propensity(p, fm),
          OutcomeModel{fm, false}};
}

}  // namespace

TEST_SUITE("gest") {
  TEST_CASE("point-treatment estimate equals the partialled-out ratio") {
    Generated g = generate(make_scenario("point-confounded"), 1500, 31);
    const Panel& p = g.panel;
    auto f = point_fit(p);
    auto res = gest_smm(p, f.spec, f.prop, f.out);

    const std::size_t n = p.n();
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd a(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      X.row(i) << 1.0, p.subject(i).l[0][0];
      a[i] = p.subject(i).a[0];
      y[i] = p.subject(i).y[1];
    }
    Eigen::VectorXd e = (X * oracle::logistic(X, a)).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    Eigen::VectorXd ry = y - X * oracle::ols(X, y), ra = a - X * oracle::ols(X, a);
    double want = (a - e).dot(ry) / (a - e).dot(ra);
    CHECK(res.psi[0] == doctest::Approx(want).epsilon(1e-9));
    CHECK(res.mode == SolveMode::closed_form);
    CHECK(res.cov.rows() == 1);
    CHECK(res.cov(0, 0) > 0.0);
  }

  TEST_CASE("score test is zero at the estimate and detects a shifted null") {
    Generated g = generate(make_scenario("point-confounded"), 1500, 32);
    auto f = point_fit(g.panel);
    auto res = gest_smm(g.panel, f.spec, f.prop, f.out);
    auto at_hat = score_test(g.panel, f.spec, f.prop, f.out, res.psi);
    CHECK(at_hat.statistic < 1e-12);
    CHECK(at_hat.df == 1);
    auto far = score_test(g.panel, f.spec, f.prop, f.out, res.psi.array() + 1.0);
    CHECK(far.p_value < 1e-6);
  }

  TEST_CASE("sandwich covariance is symmetric positive definite") {
    Scenario s = make_scenario("seq-confounded");
    Generated g = generate(s, 2000, 33);
    const Panel& p = g.panel;
    auto sym = p.symbols();
    auto term = [&](int m, const char* e, int j) { return BlipTerm{2, m, Expression::parse(e, sym), j}; };
    BlipSpec spec(Link::identity,
                  {term(1, "A", 0), term(1, "L*A", 1), term(1, "A[0]*A", 2), term(0, "A", 3), term(0, "L*A", 4)}, 5);
    auto prop = fit_propensity(p, FeatureMap::parse_per_time({{"1", "L"}, {"1", "L", "A[0]"}}, sym));
    OutcomeModel out{FeatureMap::parse_per_time({{"1", "L"}, {"1", "L", "A[0]", "L[0]", "L[0]*A[0]"}}, sym), false};
    auto res = gest_snmm(p, spec, prop, out);
    CHECK((res.cov - res.cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(res.cov);
    CHECK(eig.eigenvalues().minCoeff() > 0.0);
    CHECK(res.se().size() == 5);
  }

  TEST_CASE("log link recovers a multiplicative effect") {
    Scenario s = make_scenario("point-randomized");
    Generated g = generate(s, 4000, 34);
    // rebuild outcomes as positive values with a multiplicative effect exp(0.4 A)
    std::vector<SubjectRecord> recs = g.panel.subjects();
    for (auto& r : recs) r.y[1] = std::exp(0.5 + 0.3 * r.l[0][0] + 0.2 * (r.y[1] - r.a[0] * s.psi[0])) * std::exp(0.4 * r.a[0]);
    Panel p(g.panel.layout(), recs);
    auto f = point_fit(p);
    BlipSpec spec(Link::log, f.spec.terms(), 1);
    auto res = gest_smm(p, spec, f.prop, OutcomeModel{FeatureMap::parse({"1", "L"}, p.symbols()), false});
    CHECK(std::abs(res.psi[0] - 0.4) < 4 * res.se()[0]);
    CHECK(res.converged);
  }

  TEST_CASE("grid inversion accepts the truth and reports the threshold") {
    Scenario s = make_scenario("point-confounded");
    Generated g = generate(s, 1500, 35);
    auto sym = g.panel.symbols();
    SndmSpec spec({BlipTerm{1, 0, Expression::parse("A", sym), 0}}, 1);
    auto prop = fit_propensity(g.panel, FeatureMap::parse({"1", "L"}, sym));
    OutcomeModel out{FeatureMap::parse({"1", "L"}, sym), false};
    GridSpec grid{{GridAxis{s.psi[0] - 1.0, s.psi[0] + 1.0, 41}}, 0.95};
    auto [res, set] = gest_grid(g.panel, spec, prop, out, grid);
    CHECK(set.grid.size() == 41);
    CHECK(set.threshold == doctest::Approx(3.841459).epsilon(1e-6));
    CHECK(set.statistic[20] <= set.threshold);
    CHECK(set.statistic.front() > set.threshold);
    CHECK(set.statistic.back() > set.threshold);
    CHECK(std::abs(res.psi[0] - s.psi[0]) < 0.3);
  }

  TEST_CASE("instrument analysis flags weak first stages and bad blips") {
    Scenario s = make_scenario("noncompliance", {{"first_stage", 0.0}});
    Generated g = generate(s, 300, 37);
    auto sym = g.panel.symbols();
    auto z = fit_propensity(g.panel, FeatureMap::parse({"1"}, sym), Family::bernoulli_logit, {0});
    OutcomeModel out{FeatureMap::parse({"1", "L[0]"}, sym), false};
    BlipSpec spec(Link::identity, {BlipTerm{2, 1, Expression::parse("A[1]", sym), 0}}, 1);
    auto res = gest_iv(g.panel, spec, z, out);
    double t = INFINITY;
    for (const auto& [k, v] : res.metrics)
      if (k == "first_stage_t") t = v;
    REQUIRE(std::isfinite(t));
    CHECK(res.warnings.empty() == (t >= 2.0));
    Scenario strong = make_scenario("noncompliance");
    Generated gs = generate(strong, 300, 36);
    auto zs = fit_propensity(gs.panel, FeatureMap::parse({"1"}, sym), Family::bernoulli_logit, {0});
    CHECK(gest_iv(gs.panel, spec, zs, out).warnings.empty());
    BlipSpec on_instrument(Link::identity, {BlipTerm{2, 0, Expression::parse("A[0]", sym), 0}}, 1);
    CHECK_THROWS_AS(gest_iv(g.panel, on_instrument, z, out), ConfigError);
  }
}

TEST_SUITE("gest") {
  TEST_CASE("randomized sandwich variance matches sigma^2 / E Var(A|L)") {
    Scenario s = make_scenario("point-randomized");
    Generated g = generate(s, 5000, 37);
    const Panel& p = g.panel;
    auto sym = p.symbols();
    auto prop = known_propensity([](const HistoryView&) { return 0.5; });
    BlipSpec spec(Link::identity, {BlipTerm{1, 0, Expression::parse("A", sym), 0}}, 1);
    auto res = gest_smm(p, spec, prop, OutcomeModel{FeatureMap::parse({"1", "L"}, sym), false});
    double scaled = res.cov(0, 0) * double(p.n());
    CHECK(std::abs(scaled / 4.0 - 1.0) < 0.15);
  }

  TEST_CASE("ignoring the instrument biases the point-treatment fit") {
    Scenario s = make_scenario("noncompliance");
    std::vector<double> naive, iv;
    for (std::uint64_t r = 0; r < 60; ++r) {
      Generated g = generate(s, 2000, derive_seed(38, {r}));
      const Panel& p = g.panel;
      auto sym = p.symbols();
      BlipSpec spec(Link::identity, {BlipTerm{2, 1, Expression::parse("A[1]", sym), 0}}, 1);
      OutcomeModel out{FeatureMap::parse({"1", "L[0]"}, sym), false};
      auto prop = fit_propensity(p, FeatureMap::parse_per_time({{"1", "L[0]"}, {"1", "L[1]", "A[0]"}}, sym));
      naive.push_back(gest_snmm(p, spec, prop, out).psi[0]);
      auto z = fit_propensity(p, FeatureMap::parse({"1", "L[0]"}, sym), Family::bernoulli_logit, {0});
      iv.push_back(gest_iv(p, spec, z, out).psi[0]);
    }
    double se_naive = oracle::sd(naive) / std::sqrt(60.0), se_iv = oracle::sd(iv) / std::sqrt(60.0);
    CHECK(std::abs(oracle::mean(naive) - s.psi[0]) > 5 * se_naive);
    CHECK(std::abs(oracle::mean(iv) - s.psi[0]) < 3 * se_iv);
  }

  TEST_CASE("sensitivity sweep: the true tilt removes the hidden bias") {
    Scenario s = make_scenario("hidden-bias");
    const std::vector<double> gammas{-1.0, -0.5, 0.0, 0.5, 1.0};
    std::vector<std::vector<double>> est(gammas.size());
    for (std::uint64_t r = 0; r < 60; ++r) {
      Generated g = generate(s, 2000, derive_seed(39, {r}));
      const Panel& p = g.panel;
      auto sym = p.symbols();
      BlipSpec spec(Link::identity, {BlipTerm{1, 0, Expression::parse("A", sym), 0}}, 1);
      auto fm = FeatureMap::parse({"1", "L"}, sym);
      SensitivitySpec sens;
      sens.gamma = gammas;
      auto pts = gest_sensitivity(p, spec, fit_propensity(p, fm), sens, OutcomeModel{fm, false});
      for (std::size_t j = 0; j < gammas.size(); ++j) {
        REQUIRE(pts[j].ok);
        est[j].push_back(pts[j].result.psi[0]);
      }
    }
    std::vector<double> means;
    for (const auto& e : est) means.push_back(oracle::mean(e));
    for (std::size_t j = 1; j < means.size(); ++j) CHECK(means[j] < means[j - 1]);
    CHECK(std::abs(means[3] - s.psi[0]) < 3 * oracle::sd(est[3]) / std::sqrt(60.0));
    CHECK(std::abs(means[2] - s.psi[0]) > 5 * oracle::sd(est[2]) / std::sqrt(60.0));
  }

  TEST_CASE("saturated logistic structural model is the stratum log odds ratio") {
    // binary L and Y, confounded A; blip (psi_0 + psi_1 L) A with a saturated outcome-mean model
    std::mt19937_64 eng(40);
    std::uniform_real_distribution<double> U;
    std::vector<SubjectRecord> recs;
    for (int i = 0; i < 4000; ++i) {
      SubjectRecord r;
      r.id = std::to_string(i);
      double L = U(eng) < 0.4;
      double A = U(eng) < (L ? 0.7 : 0.3);
      double py = 1.0 / (1.0 + std::exp(-(-0.5 + 0.8 * L + (0.6 - 0.4 * L) * A)));
      r.l = {{L}};
      r.a = {A};
      r.y = {NAN, double(U(eng) < py)};
      recs.push_back(r);
    }
    PanelLayout layout;
    layout.time_grid = {0, 1};
    layout.covariate_names = {"L"};
    layout.outcome_times = {1};
    Panel p(layout, recs);
    auto sym = p.symbols();
    BlipSpec spec(Link::logit,
                  {BlipTerm{1, 0, Expression::parse("A", sym), 0}, BlipTerm{1, 0, Expression::parse("A*L", sym), 1}}, 2);
    auto prop = fit_propensity(p, FeatureMap::parse({"1", "L"}, sym));
    auto mean = fit_outcome_mean(p, FeatureMap::parse({"1", "L", "A", "A*L"}, sym));
    auto res = gest_logistic_smm(p, spec, prop, mean, OutcomeModel{FeatureMap::parse({"1", "L"}, sym), false});

    double n[2][2] = {}, y[2][2] = {};
    for (const auto& r : p.subjects()) {
      n[int(r.l[0][0])][int(r.a[0])] += 1;
      y[int(r.l[0][0])][int(r.a[0])] += r.y[1];
    }
    auto logit = [](double q) { return std::log(q / (1 - q)); };
    double lor0 = logit(y[0][1] / n[0][1]) - logit(y[0][0] / n[0][0]);
    double lor1 = logit(y[1][1] / n[1][1]) - logit(y[1][0] / n[1][0]);
    CHECK(res.psi[0] == doctest::Approx(lor0).epsilon(1e-8));
    CHECK(res.psi[0] + res.psi[1] == doctest::Approx(lor1).epsilon(1e-8));
  }

  TEST_CASE("location-shift distribution model covers the truth by test inversion") {
    Scenario s = make_scenario("point-confounded");
    int covered = 0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
      Generated g = generate(s, 500, derive_seed(41, {std::uint64_t(r)}));
      auto sym = g.panel.symbols();
      SndmSpec spec({BlipTerm{1, 0, Expression::parse("A", sym), 0}, BlipTerm{1, 0, Expression::parse("A*L", sym), 1}},
                    2);
      auto prop = fit_propensity(g.panel, FeatureMap::parse({"1", "L"}, sym));
      GridSpec one{{GridAxis{1.0, 1.0, 1}, GridAxis{0.0, 0.0, 1}}, 0.95};
      auto [res, set] = gest_grid(g.panel, spec, prop, OutcomeModel{FeatureMap::parse({"1", "L"}, sym), false}, one);
      covered += set.accepted.size() == 1;
    }
    CHECK(std::abs(covered / double(reps) - 0.95) <= 0.03);
  }
}
