#include <cmath>

#include "doctest.h"
#include "gestimate/effects.hpp"
#include "gestimate/error.hpp"
#include "gestimate/rng.hpp"
#include "gestimate/sim.hpp"
#include "oracles.hpp"

using namespace gestimate;

namespace {

BlipSpec seq_blip(const Panel& p) {
  auto s = p.symbols();
  auto term = [&](int m, const char* e, int j) { return BlipTerm{2, m, Expression::parse(e, s), j}; };
  return BlipSpec(Link::identity,
                  {term(1, "A", 0), term(1, "L*A", 1), term(1, "A[0]*A", 2), term(0, "A", 3), term(0, "L*A", 4)}, 5);
}

}  // namespace

TEST_SUITE("effects") {
  TEST_CASE("zero effects predict the sample mean under any regime") {
    Generated g = generate(make_scenario("seq-confounded"), 700, 61);
    const Panel& p = g.panel;
    double mean = 0.0;
    for (const auto& r : p.subjects()) mean += r.y[2];
    mean /= double(p.n());
    for (auto regime : {RegimeSpec::fixed(0, 0), RegimeSpec::fixed(1, 0), RegimeSpec::fixed(1, 1)})
      CHECK(regime_mean(p, seq_blip(p), Eigen::VectorXd::Zero(5), regime, {}) == mean);
  }

  TEST_CASE("true effects and the never-treat regime give the baseline mean") {
    Scenario s = make_scenario("seq-confounded");
    Generated g = generate(s, 20000, 62);
    double base = 0.0;
    for (const auto& b : g.truth.baseline) base += b[1];
    base /= double(g.truth.baseline.size());
    double pred = regime_mean(g.panel, seq_blip(g.panel), s.psi, RegimeSpec::fixed(0, 0), {});
    CHECK(pred == doctest::Approx(base).epsilon(1e-10));
  }

  TEST_CASE("static regimes are recognised") {
    auto r = RegimeSpec::fixed(1, 0);
    CHECK(r.is_static());
    Generated g = generate(make_scenario("seq-confounded"), 5, 63);
    RegimeSpec dyn{Expression::constant(1), Expression::parse("L[1] > 0", g.panel.symbols()), "dynamic", true};
    CHECK_FALSE(dyn.is_static());
  }

  TEST_CASE("bootstrap standard error shrinks with sample size") {
    Scenario s = make_scenario("seq-confounded");
    auto se_at = [&](std::size_t n) {
      Generated g = generate(s, n, 64);
      auto spec = seq_blip(g.panel);
      EstimateResult fit;
      fit.psi = s.psi;
      Refit refit = [&](const Panel&) { return Eigen::VectorXd(s.psi); };
      PredictOptions o;
      o.bootstrap = 50;
      o.seed = 3;
      return predict_regime_mean(g.panel, spec, fit, RegimeSpec::fixed(1, 1), refit, o).se;
    };
    CHECK(se_at(4000) < se_at(250));
  }

  TEST_CASE("controlled direct effect recovers the mediation truth") {
    Scenario s = make_scenario("mediation");
    Generated g = generate(s, 20000, 65);
    const Panel& p = g.panel;
    auto sym = p.symbols();
    CdeSpec cde;
    cde.features = {Expression::parse("A[0]", sym), Expression::parse("A[0]*A[1]", sym)};
    cde.outcome = FeatureMap::parse({"1", "L[0]", "A[1]", "L[0]*A[1]"}, sym);
    auto pa = fit_propensity(p, FeatureMap::parse({"1", "L[0]"}, sym), Family::bernoulli_logit, {0});
    auto pm = fit_propensity(p, FeatureMap::parse({"1", "L[1]", "A[0]"}, sym), Family::bernoulli_logit, {1});
    auto res = fit_cde(p, cde, pa, pm);
    auto se = res.se();
    CHECK(std::abs(res.psi[0] - s.psi[0]) < 4 * se[0]);
    CHECK(std::abs(res.psi[1] - s.psi[1]) < 4 * se[1]);
  }

  TEST_CASE("direct-effect blips must carry the initial treatment") {
    Generated g = generate(make_scenario("mediation"), 200, 66);
    auto sym = g.panel.symbols();
    CdeSpec cde;
    cde.features = {Expression::parse("A[1]", sym)};
    cde.outcome = FeatureMap::parse({"1"}, sym);
    auto pa = fit_propensity(g.panel, FeatureMap::parse({"1"}, sym), Family::bernoulli_logit, {0});
    auto pm = fit_propensity(g.panel, FeatureMap::parse({"1"}, sym), Family::bernoulli_logit, {1});
    CHECK_THROWS_AS(fit_cde(g.panel, cde, pa, pm), DataError);
  }
}

TEST_SUITE("effects") {
  TEST_CASE("direct effect with an interaction is unbiased over replications") {
    Scenario s = make_scenario("mediation");
    std::vector<double> p0, p1;
    for (std::uint64_t r = 0; r < 200; ++r) {
      Generated g = generate(s, 4000, derive_seed(67, {r}));
      const Panel& p = g.panel;
      auto sym = p.symbols();
      CdeSpec cde;
      cde.features = {Expression::parse("A[0]", sym), Expression::parse("A[0]*A[1]", sym)};
      cde.outcome = FeatureMap::parse({"1", "L[0]", "A[1]", "L[0]*A[1]"}, sym);
      auto pa = fit_propensity(p, FeatureMap::parse({"1", "L[0]"}, sym), Family::bernoulli_logit, {0});
      auto pm = fit_propensity(p, FeatureMap::parse({"1", "L[1]", "A[0]"}, sym), Family::bernoulli_logit, {1});
      auto res = fit_cde(p, cde, pa, pm);
      p0.push_back(res.psi[0]);
      p1.push_back(res.psi[1]);
    }
    auto se = [](const std::vector<double>& v) { return oracle::sd(v) / std::sqrt(double(v.size())); };
    CHECK(std::abs(oracle::mean(p0) - s.psi[0]) < 3 * se(p0));
    CHECK(std::abs(oracle::mean(p1) - s.psi[1]) < 3 * se(p1));
  }
}
