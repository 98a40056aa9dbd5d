#include "gestimate/effects.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>

#include "gestimate/error.hpp"
#include "gestimate/linalg.hpp"
#include "gestimate/rng.hpp"
#include "system.hpp"

namespace gestimate {

using Eigen::MatrixXd;
using Eigen::VectorXd;

RegimeSpec RegimeSpec::fixed(double a0, double a1) {
  RegimeSpec r;
  r.a0 = Expression::constant(a0);
  r.a1 = Expression::constant(a1);
  char buf[64];
  std::snprintf(buf, sizeof buf, "(%g, %g)", a0, a1);
  r.label = buf;
  return r;
}

namespace {

FeatureMap default_inner(const Panel& panel) {
  std::vector<std::string> f{"1"};
  for (const auto& c : panel.covariate_names()) f.push_back(c + "[0]");
  return FeatureMap::parse(f, panel.symbols());
}

}  // namespace

double regime_mean(const Panel& panel, const BlipSpec& spec, const VectorXd& psi, const RegimeSpec& regime,
                   const FeatureMap& inner_features, int target) {
  if (panel.K() != 1) throw DataError("regime prediction needs a two-period panel (K = 1)");
  if (spec.link() != Link::identity) throw DataError("regime prediction needs the identity link");
  const int k = target < 0 ? panel.K() + 1 : target;
  if (!panel.is_outcome_time(k)) throw DataError("outcome time " + std::to_string(k) + " is not declared");
  auto comps = components_after(panel, 0);
  const auto kpos = std::find(comps.begin(), comps.end(), k) - comps.begin();
  const FeatureMap& inner = inner_features.empty() ? default_inner(panel) : inner_features;
  const std::size_t n = panel.n();

  std::vector<double> a0(n), base(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = panel.subject(i);
    HistoryView h(panel, rec, 0);
    a0[i] = regime.a0.eval(h.without_current_treatment(), 0);
    double g0 = blip_features(spec, h.with_treatment(0, a0[i]), 0, k).dot(psi);
    base[i] = blipdown_snmm(spec, panel, rec, psi, 0)[kpos] + g0;
  }

  // E{gamma_1(L̄_1, (a_0, a_1)) | A_0 = a_0, L_0} by regression within the a_0 stratum
  std::map<double, VectorXd> coef;
  for (double lvl : a0) {
    if (coef.count(lvl)) continue;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n; ++i)
      if (panel.subject(i).a[0] == lvl) rows.push_back(i);
    if (rows.empty()) throw DataError("empty conditioning stratum: no subjects with A_0 = " + std::to_string(lvl));
    VectorXd g1(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& rec = panel.subject(rows[r]);
      double path[2] = {lvl, 0.0};
      path[1] = regime.a1.eval(HistoryView::counterfactual(panel, rec, 1, path), 1);
      g1[r] = blip_features(spec, HistoryView::counterfactual(panel, rec, 1, path), 1, k).dot(psi);
    }
    MatrixXd X = history_design(panel, inner, 0, rows);
    coef[lvl] = least_squares(X, g1).coef;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    HistoryView h(panel, panel.subject(i), 0);
    total += base[i] + inner.eval(h.without_current_treatment(), 0).dot(coef[a0[i]]);
  }
  return total / double(n);
}

RegimePrediction predict_regime_mean(const Panel& panel, const BlipSpec& spec, const EstimateResult& fit,
                                     const RegimeSpec& regime, const Refit& refit, const PredictOptions& options) {
  RegimePrediction out;
  out.label = regime.label;
  out.no_current_interaction = regime.no_current_interaction;
  out.mean = regime_mean(panel, spec, fit.psi, regime, options.inner_features, options.target);
  out.notes.push_back(regime.no_current_interaction
                          ? "assumes no current treatment interaction (r_0 = r_1 = 0), asserted by the caller"
                          : "no-current-treatment-interaction assumption not asserted; prediction relies on it");
  if (options.bootstrap > 0 && refit) {
    std::vector<double> draws(options.bootstrap, std::numeric_limits<double>::quiet_NaN());
    parallel_for(options.bootstrap, options.jobs, [&](std::size_t b) {
      Rng rng(derive_seed(options.seed, {0xb007, b}));
      std::vector<std::size_t> idx(panel.n());
      for (auto& i : idx) i = rng.index(panel.n());
      try {
        Panel bp = panel.select(idx);
        draws[b] = regime_mean(bp, spec, refit(bp), regime, options.inner_features, options.target);
      } catch (const Error&) {
      }
    });
    std::vector<double> ok;
    for (double d : draws)
      if (std::isfinite(d)) ok.push_back(d);
    out.bootstrap = static_cast<int>(ok.size());
    out.bootstrap_failures = options.bootstrap - out.bootstrap;
    if (ok.size() >= 2) {
      double m = std::accumulate(ok.begin(), ok.end(), 0.0) / ok.size();
      double ss = 0.0;
      for (double d : ok) ss += (d - m) * (d - m);
      out.se = std::sqrt(ss / (ok.size() - 1.0));
    } else {
      out.se = std::numeric_limits<double>::quiet_NaN();
    }
  } else {
    out.se = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

namespace {

bool reads(const Expression& e, VarKind kind, int time, int m) {
  return e.references([&](const VarRef& r) {
    if (r.kind != kind) return false;
    try {
      return r.resolve(m, 2) == time;
    } catch (const Error&) {
      return true;
    }
  });
}

}  // namespace

EstimateResult fit_cde(const Panel& panel, const CdeSpec& cde, const PropensityFit& prop_a0,
                       const PropensityFit& mediator) {
  if (panel.K() != 1) throw DataError("controlled direct effects need a two-period panel (K = 1)");
  const int k = panel.K() + 1;
  if (!panel.is_outcome_time(k)) throw DataError("controlled direct effects need the final outcome Y_2");
  const int p = static_cast<int>(cde.features.size());
  if (p == 0) throw ConfigError("direct-effect model needs at least one feature");
  for (const auto& f : cde.features) {
    if (!f.has_factor([](const VarRef& r) {
          if (r.kind != VarKind::treatment) return false;
          try {
            return r.resolve(1, 2) == 0;
          } catch (const Error&) {
            return false;
          }
        }))
      throw ConfigError("direct-effect term '" + f.text() + "' must contain a factor A[0]");
    if (reads(f, VarKind::covariate, 1, 1) || reads(f, VarKind::outcome, 1, 1))
      throw ConfigError("direct-effect term '" + f.text() + "' may read only A[0], A[1] and L[0]");
  }
  for (const auto& name : cde.outcome.names(0)) {
    auto e = Expression::parse(name, panel.symbols());
    if (reads(e, VarKind::treatment, 0, 0) || reads(e, VarKind::covariate, 1, 0) || reads(e, VarKind::outcome, 1, 0))
      throw ConfigError("direct-effect outcome model may read only L[0] and A[1]: '" + name + "'");
  }

  const std::size_t n = panel.n();
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  bool a1_constant = true;
  for (std::size_t i = 1; i < n; ++i) a1_constant = a1_constant && panel.subject(i).a[1] == panel.subject(0).a[1];

  detail::SlotPlan plan;
  plan.m = 0;
  plan.k = k;
  plan.rows = rows;
  plan.weight.resize(n);
  plan.design.resize(n, cde.outcome.size(0));
  MatrixXd G(n, p);
  VectorXd y(n);
  double wmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = panel.subject(i);
    HistoryView h1(panel, rec, 1);
    double w = a1_constant ? 1.0 : 1.0 / mediator.density(h1);
    if (!(w <= cde.max_weight))
      throw NumericalError("positivity failure: inverse mediator density " + std::to_string(w) + " for subject " +
                           rec.id + " exceeds " + std::to_string(cde.max_weight));
    wmax = std::max(wmax, w);
    plan.weight[i] = w;
    plan.design.row(i) = cde.outcome.eval(h1, 0).transpose();
    for (int j = 0; j < p; ++j) G(i, j) = cde.features[j].eval(h1, 1, k);
    y[i] = rec.y[k];
  }
  auto feats = cde.features;
  plan.index = [feats](const HistoryView& h, int, int kk) {
    const auto& rec = h.record();
    double path[2] = {h.treatment(0), rec.a[1]};
    auto v = HistoryView::counterfactual(h.panel(), rec, 1, path);
    VectorXd d(feats.size());
    for (std::size_t j = 0; j < feats.size(); ++j) d[j] = feats[j].eval(v, 1, kk);
    return d;
  };

  detail::SnmmData data;
  data.plans.push_back(plan);
  data.G.push_back(G);
  data.y.push_back(y);
  auto sys = detail::build_system(panel, p, prop_a0, data.plans, detail::snmm_response(data, Link::identity));
  auto sol = detail::solve_linear(sys);
  EstimateResult res;
  res.method = "cde";
  res.psi_names = cde.psi_names;
  if (res.psi_names.size() != static_cast<std::size_t>(p)) {
    res.psi_names.clear();
    for (int j = 0; j < p; ++j) res.psi_names.push_back("psi" + std::to_string(j));
  }
  detail::finish_result(res, sys, sol);
  res.metric("max_weight", wmax);
  res.notes.push_back("mediator weights treated as fixed in the sandwich variance");
  if (a1_constant) res.notes.push_back("mediator constant; all weights equal 1");
  return res;
}

}  // namespace gestimate
