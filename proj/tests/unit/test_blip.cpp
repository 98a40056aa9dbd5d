#include <cmath>
#include <random>

#include "doctest.h"
#include "gestimate/blip.hpp"
#include "gestimate/error.hpp"
#include "gestimate/sim.hpp"
#include "gestimate/survival.hpp"

using namespace gestimate;

namespace {

BlipSpec seq_blip(const Panel& p, Link link) {
  auto s = p.symbols();
  auto term = [&](int m, const char* e, int j) { return BlipTerm{2, m, Expression::parse(e, s), j}; };
  return BlipSpec(link,
                  {BlipTerm{1, 0, Expression::parse("A", s), 3}, term(1, "A", 0), term(1, "L*A", 1),
                   term(1, "A[0]*A", 2), term(0, "A", 3), term(0, "L*A", 4)},
                  5);
}

}  // namespace

TEST_SUITE("blip") {
  TEST_CASE("identity blip-down subtracts the cumulative blip") {
    Generated g = generate(make_scenario("seq-confounded"), 50, 11);
    const Panel& p = g.panel;
    auto spec = seq_blip(p, Link::identity);
    Eigen::VectorXd psi(5);
    psi << 0.3, -0.2, 0.5, 1.1, 0.4;
    for (const auto& r : p.subjects()) {
      double L0 = r.l[0][0], L1 = r.l[1][0], A0 = r.a[0], A1 = r.a[1];
      Eigen::VectorXd u0 = blipdown_snmm(spec, p, r, psi, 0);
      Eigen::VectorXd u1 = blipdown_snmm(spec, p, r, psi, 1);
      double g1 = (psi[0] + psi[1] * L1 + psi[2] * A0) * A1;
      double g0 = (psi[3] + psi[4] * L0) * A0;
      CHECK(u1.size() == 1);
      CHECK(u1[0] == doctest::Approx(r.y[2] - g1).epsilon(1e-14));
      CHECK(u0[0] == doctest::Approx(r.y[1] - psi[3] * A0).epsilon(1e-14));
      CHECK(u0[1] == doctest::Approx(r.y[2] - g1 - g0).epsilon(1e-14));
    }
  }

  TEST_CASE("psi = 0 leaves outcomes unchanged under every link") {
    Generated g = generate(make_scenario("seq-confounded"), 20, 12);
    for (Link link : {Link::identity, Link::log}) {
      auto spec = seq_blip(g.panel, link);
      for (const auto& r : g.panel.subjects()) {
        Eigen::VectorXd u = blipdown_snmm(spec, g.panel, r, Eigen::VectorXd::Zero(5), 0);
        CHECK(u[0] == r.y[1]);
        CHECK(u[1] == r.y[2]);
      }
    }
  }

  TEST_CASE("jacobians agree with finite differences") {
    Generated g = generate(make_scenario("seq-confounded"), 30, 13);
    const Panel& p = g.panel;
    std::mt19937_64 eng(5);
    std::uniform_real_distribution<double> U(-0.4, 0.4);
    for (Link link : {Link::identity, Link::log}) {
      auto spec = seq_blip(p, link);
      for (const auto& r : p.subjects()) {
        Eigen::VectorXd psi(5);
        for (int j = 0; j < 5; ++j) psi[j] = U(eng);
        for (int m = 0; m < 2; ++m) {
          Eigen::MatrixXd J = blip_jacobian(spec, p, r, psi, m);
          for (int j = 0; j < 5; ++j) {
            Eigen::VectorXd a = psi, b = psi;
            a[j] += 1e-6;
            b[j] -= 1e-6;
            Eigen::VectorXd fd = (blipdown_snmm(spec, p, r, a, m) - blipdown_snmm(spec, p, r, b, m)) / 2e-6;
            CHECK((J.col(j) - fd).norm() <= 1e-6 * std::max(1.0, fd.norm()));
          }
        }
      }
    }
  }

  TEST_CASE("terms must fit the panel") {
    Generated g = generate(make_scenario("point-confounded"), 5, 1);
    auto s = g.panel.symbols();
    BlipSpec late(Link::identity, {BlipTerm{3, 0, Expression::parse("A", s), 0}}, 1);
    CHECK_THROWS_AS(late.check_panel(g.panel), DataError);
    CHECK_THROWS_AS(BlipSpec(Link::identity, {BlipTerm{1, 1, Expression::parse("A", s), 0}}, 1), DataError);
  }

  TEST_CASE("failure-time blip-down integrates the treatment-dependent scale") {
    Scenario s = make_scenario("saftm-confounded");
    Generated g = generate(s, 200, 14);
    const Panel& p = g.panel;
    SaftmSpec spec({SaftmTerm{-1, Expression::parse("A", p.symbols()), 0}}, 1);
    Eigen::VectorXd psi = Eigen::VectorXd::Constant(1, 0.35);
    for (const auto& r : p.subjects()) {
      if (!*r.event_observed) continue;
      double T = *r.event_time;
      double want = T <= 1.0 ? T * std::exp(psi[0] * r.a[0])
                             : std::exp(psi[0] * r.a[0]) + (T - 1.0) * std::exp(psi[0] * r.a[1]);
      CHECK(blipdown_time(spec, p, r, psi, 0) == doctest::Approx(want).epsilon(1e-12));
      CHECK(blipdown_time(spec, p, r, Eigen::VectorXd::Zero(1), 0) == T);
    }
  }
}

namespace {

Panel one_subject(std::vector<double> a, std::vector<double> l, std::vector<double> y) {
  SubjectRecord r;
  r.id = "1";
  r.a = a;
  for (double v : l) r.l.push_back({v});
  r.y = y;
  PanelLayout layout;
  layout.K = static_cast<int>(a.size()) - 1;
  for (int k = 0; k <= layout.K + 1; ++k) layout.time_grid.push_back(k);
  layout.covariate_names = {"L"};
  for (int k = 1; k <= layout.K + 1; ++k) layout.outcome_times.push_back(k);
  return Panel(layout, {r});
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(v.size());
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

struct Fixed : MeanPredictor {
  double v;
  explicit Fixed(double v) : v(v) {}
  double mean(const HistoryView&) const override { return v; }
};

}  // namespace

TEST_SUITE("blip") {
  TEST_CASE("worked examples") {
    // gamma* = (psi_0 + psi_1 l) a
    Panel p = one_subject({1.0}, {2.0}, {NAN, 5.0});
    auto sym = p.symbols();
    BlipSpec lin(Link::identity,
                 {BlipTerm{1, 0, Expression::parse("A", sym), 0}, BlipTerm{1, 0, Expression::parse("L*A", sym), 1}}, 2);
    HistoryView h(p, p.subject(0), 0);
    CHECK(eval_blip(lin, h, vec({1.0, 0.5}), 0, 1) == 2.0);
    CHECK(eval_blip(lin, h.with_treatment(0, 0.0), vec({1.0, 0.5}), 0, 1) == 0.0);
    CHECK(eval_blip(lin, h, vec({0.0, 0.0}), 0, 1) == 0.0);

    // point transforms under the three links
    CHECK(transform_point(lin, p, p.subject(0), vec({1.0, 0.5})) == 3.0);
    Panel p4 = one_subject({1.0}, {0.0}, {NAN, 4.0});
    BlipSpec log_a(Link::log, {BlipTerm{1, 0, Expression::parse("A", sym), 0}}, 1);
    CHECK(transform_point(log_a, p4, p4.subject(0), vec({std::log(2.0)})) == doctest::Approx(2.0).epsilon(1e-15));
    BlipSpec logit_a(Link::logit, {BlipTerm{1, 0, Expression::parse("A", sym), 0}}, 1);
    auto logit = [](double q) { return std::log(q / (1 - q)); };
    Fixed fitted(0.8);
    CHECK(transform_point(logit_a, p4, p4.subject(0), vec({logit(0.8) - logit(0.4)}), &fitted) ==
          doctest::Approx(0.4).epsilon(1e-14));
    CHECK_THROWS(transform_point(logit_a, p4, p4.subject(0), vec({0.3})));

    // two-period mean model: (Y1, Y2, L0, L1, A0, A1) = (1, 3, 0, 1, 1, 1), psi = (1, 0, 0, 1, 0)
    Panel q = one_subject({1.0, 1.0}, {0.0, 1.0}, {NAN, 1.0, 3.0});
    auto qs = q.symbols();
    auto term = [&](int k, int m, const char* e, int j) { return BlipTerm{k, m, Expression::parse(e, qs), j}; };
    BlipSpec two(Link::identity,
                 {term(1, 0, "A", 3), term(2, 1, "A", 0), term(2, 1, "L*A", 1), term(2, 1, "A[0]*A", 2),
                  term(2, 0, "A", 3), term(2, 0, "L*A", 4)},
                 5);
    Eigen::VectorXd psi = vec({1, 0, 0, 1, 0});
    CHECK(blipdown_snmm(two, q, q.subject(0), psi, 1) == vec({2.0}));
    CHECK(blipdown_snmm(two, q, q.subject(0), psi, 0) == vec({0.0, 1.0}));
    Eigen::MatrixXd J = blip_jacobian(two, q, q.subject(0), Eigen::VectorXd::Zero(5), 1);
    CHECK(J(0, 0) == -1.0);
    CHECK(J(0, 1) == -1.0);
    CHECK(J(0, 3) == 0.0);

    // distribution model: (Y1, Y2, L0, L1, A0, A1) = (2, 4, 1, 0, 1, 1), psi = (1, 1, 1, 0.5)
    Panel d = one_subject({1.0, 1.0}, {1.0, 0.0}, {NAN, 2.0, 4.0});
    auto ds = d.symbols();
    auto dterm = [&](int k, int m, const char* e, int j) { return BlipTerm{k, m, Expression::parse(e, ds), j}; };
    SndmSpec sndm({dterm(1, 0, "A", 0), dterm(1, 0, "L*A", 1), dterm(2, 1, "A", 0), dterm(2, 1, "L*A", 1),
                   dterm(2, 0, "A", 2), dterm(2, 0, "Y[1]*A", 3)},
                  4);
    Eigen::VectorXd dpsi = vec({1, 1, 1, 0.5});
    CHECK(blipdown_sndm(sndm, d, d.subject(0), dpsi, 1) == vec({3.0}));
    CHECK(blipdown_sndm(sndm, d, d.subject(0), dpsi, 0) == vec({0.0, 1.0}));
  }

  TEST_CASE("untreated futures are never blipped") {
    Generated g = generate(make_scenario("seq-confounded"), 200, 15);
    std::vector<SubjectRecord> recs = g.panel.subjects();
    for (auto& r : recs) r.a[1] = 0.0;
    Panel p(g.panel.layout(), recs);
    auto sym = p.symbols();
    auto term = [&](int m, const char* e, int j) { return BlipTerm{2, m, Expression::parse(e, sym), j}; };
    BlipSpec spec(Link::identity, {term(1, "A", 0), term(1, "L*A", 1), term(1, "A[0]*A", 2), term(0, "A", 3)}, 4);
    for (const auto& r : p.subjects()) CHECK(blipdown_snmm(spec, p, r, Eigen::VectorXd::Constant(4, 0.7), 1)[0] == r.y[2]);
  }
}
