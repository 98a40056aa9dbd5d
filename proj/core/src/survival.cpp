#include "gestimate/survival.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "gestimate/error.hpp"
#include "system.hpp"

namespace gestimate {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void check_survival(const Panel& panel, const SubjectRecord& record, int m) {
  if (!panel.survival()) throw DataError("failure-time models need a survival-mode panel");
  if (m < 0 || m > panel.K()) throw DataError("interval index m outside 0..K");
  if (!record.censor_time || !std::isfinite(*record.censor_time))
    throw DataError("subject " + record.id + " has no finite censoring time; Type I censoring requires one");
}

// scale factor exp(features . psi) of interval k along a path
double interval_scale(const SaftmSpec& spec, const HistoryView& h, const VectorXd& psi) {
  double g = spec.features(h).dot(psi);
  if (std::abs(g) > 700) throw NumericalError("failure-time blip overflows exp");
  return std::exp(g);
}

// sum of rescaled interval lengths of [t_m, t] along a history supplier
template <class ViewAt>
double rescaled(const SaftmSpec& spec, const Panel& panel, const VectorXd& psi, int m, double t, ViewAt view_at) {
  const auto& tg = panel.time_grid();
  const int K = panel.K();
  if (t < tg[m]) throw DataError("time " + std::to_string(t) + " lies before t_m");
  double u = tg[m];
  for (int k = m; k <= K && tg[k] < t; ++k) {
    double end = k == K ? t : std::min(t, tg[k + 1]);
    u += (end - tg[k]) * interval_scale(spec, view_at(k), psi);
  }
  return u;
}

}  // namespace

double blipdown_time(const SaftmSpec& spec, const Panel& panel, const SubjectRecord& record, const VectorXd& psi,
                     int m) {
  if (!panel.survival()) throw DataError("failure-time models need a survival-mode panel");
  if (!record.event_time || !record.event_observed.value_or(false))
    throw DataError("subject " + record.id + " has no observed event time");
  if (psi.size() != spec.p()) throw DataError("psi dimension mismatch");
  double T = *record.event_time;
  if (T < panel.time_grid()[m]) throw DataError("event time precedes t_m for subject " + record.id);
  return rescaled(spec, panel, psi, m, T, [&](int k) { return HistoryView(panel, record, k); });
}

double blipdown_time_at(const SaftmSpec& spec, const Panel& panel, const SubjectRecord& record, const VectorXd& psi,
                        int m, double t, const double* path) {
  if (psi.size() != spec.p()) throw DataError("psi dimension mismatch");
  return rescaled(spec, panel, psi, m, t,
                  [&](int k) { return HistoryView::counterfactual(panel, record, k, path); });
}

double censor_bound(const SaftmSpec& spec, const Panel& panel, const SubjectRecord& record, const VectorXd& psi,
                    int m) {
  check_survival(panel, record, m);
  const double C = *record.censor_time;
  const auto& tg = panel.time_grid();
  const int K = panel.K();
  if (C < tg[m]) throw DataError("censoring time precedes t_m for subject " + record.id);
  auto levels = panel.treatment_levels();
  if (levels.size() > 10)
    throw DataError("censoring bound needs discrete treatments; found " + std::to_string(levels.size()) + " levels");

  // free coordinates: intervals m.. that start before C
  int last = m;
  while (last + 1 <= K && tg[last + 1] < C) ++last;
  const int free = last - m + 1;
  double combos = std::pow(double(levels.size()), free);
  if (combos > 1e6) throw DataError("too many treatment sequences to minimize the censoring bound");

  std::vector<double> path(K + 1, 0.0);
  for (int j = 0; j < m; ++j) path[j] = record.a[j];
  std::vector<std::size_t> ix(free, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    for (int j = 0; j < free; ++j) path[m + j] = levels[ix[j]];
    best = std::min(best, blipdown_time_at(spec, panel, record, psi, m, C, path.data()));
    int j = free - 1;
    while (j >= 0 && ++ix[j] == levels.size()) ix[j--] = 0;
    if (j < 0) break;
  }
  return best;
}

SurvTransform surv_transform(const SaftmSpec& spec, const Panel& panel, const SubjectRecord& record,
                             const VectorXd& psi, int m) {
  SurvTransform st;
  st.c = censor_bound(spec, panel, record, psi, m);
  if (record.event_observed.value_or(false)) {
    double u = blipdown_time(spec, panel, record, psi, m);
    if (u < st.c) {
      st.x = u;
      st.delta = true;
    } else {
      st.x = st.c;
      st.artificially_censored = true;
    }
  } else {
    // T > C implies U_m(psi) >= C_m(psi); the event time is not needed
    st.x = st.c;
  }
  return st;
}

double smooth_weight(double t, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DataError("smooth weight needs alpha in (0, 1]");
  if (!(t >= 0.0 && t <= 1.0)) throw DataError("smooth weight argument outside [0, 1]");
  return t > 1.0 - alpha ? (1.0 - t) / alpha : 1.0;
}

namespace {

struct SaftmSystem {
  std::vector<detail::SlotPlan> plans;
  std::shared_ptr<std::vector<VectorXd>> q;
  std::unique_ptr<detail::EstimatingSystem> sys;
};

SaftmSystem make_system(const Panel& panel, const SaftmSpec& spec, const PropensityFit& prop,
                        const OutcomeModel& out, const SaftmOptions& opt) {
  if (!panel.survival()) throw DataError("method saftm needs a survival-mode panel with event and censoring columns");
  if (!(opt.alpha > 0.0 && opt.alpha <= 1.0)) throw ConfigError("smooth-weight alpha must lie in (0, 1]");
  SaftmSystem s;
  IndexMap idx = opt.index ? opt.index : IndexMap([spec](const HistoryView& h, int, int) { return spec.features(h); });
  for (int m = 0; m <= panel.K(); ++m) {
    auto rows = at_risk(panel, m);
    if (rows.empty()) continue;
    detail::SlotPlan plan;
    plan.m = m;
    plan.k = m + 1;
    plan.rows = rows;
    plan.design = out.zero ? MatrixXd(rows.size(), 0) : history_design(panel, out.features, m, rows);
    if (panel.layout().has_weight) {
      plan.weight.resize(rows.size());
      for (std::size_t r = 0; r < rows.size(); ++r) plan.weight[r] = panel.subject(rows[r]).weight;
    }
    plan.index = idx;
    s.plans.push_back(std::move(plan));
  }
  if (s.plans.empty()) throw DataError("no subject is at risk at any interval");
  s.q = std::make_shared<std::vector<VectorXd>>(s.plans.size());
  for (std::size_t j = 0; j < s.plans.size(); ++j) (*s.q)[j] = VectorXd::Zero(s.plans[j].rows.size());
  auto q = s.q;
  detail::ResponseFn fn = [q](const VectorXd&, bool) {
    detail::Response r;
    r.q = *q;
    return r;
  };
  s.sys = std::make_unique<detail::EstimatingSystem>(
      detail::build_system(panel, spec.p(), prop, s.plans, fn));
  return s;
}

double statistic_at(SaftmSystem& s, const Panel& panel, const SaftmSpec& spec, const VectorXd& psi, double alpha,
                    int* artificial) {
  int art = 0;
  for (std::size_t j = 0; j < s.plans.size(); ++j) {
    const auto& pl = s.plans[j];
    for (std::size_t r = 0; r < pl.rows.size(); ++r) {
      auto st = surv_transform(spec, panel, panel.subject(pl.rows[r]), psi, pl.m);
      art += st.artificially_censored;
      double ratio = st.c > 0.0 ? std::clamp(st.x / st.c, 0.0, 1.0) : 1.0;
      (*s.q)[j][r] = st.delta ? smooth_weight(ratio, alpha) : 0.0;
    }
  }
  if (artificial) *artificial = art;
  return s.sys->statistic(s.sys->evaluate(psi, false));
}

}  // namespace

double saftm_statistic(const Panel& panel, const SaftmSpec& spec, const PropensityFit& prop, const OutcomeModel& out,
                       const VectorXd& psi, const SaftmOptions& options, int* artificial) {
  auto s = make_system(panel, spec, prop, out, options);
  return statistic_at(s, panel, spec, psi, options.alpha, artificial);
}

double residual_score_statistic(const Panel& panel, const SaftmSpec& spec, const PropensityFit& prop,
                                const OutcomeModel& out, const ResidualFn& residual, const SaftmOptions& options) {
  auto s = make_system(panel, spec, prop, out, options);
  for (std::size_t j = 0; j < s.plans.size(); ++j)
    for (std::size_t r = 0; r < s.plans[j].rows.size(); ++r) (*s.q)[j][r] = residual(s.plans[j].rows[r], s.plans[j].m);
  return s.sys->statistic(s.sys->evaluate(VectorXd::Zero(spec.p()), false));
}

std::pair<EstimateResult, ConfidenceSet> gest_saftm(const Panel& panel, const SaftmSpec& spec,
                                                    const PropensityFit& prop, const OutcomeModel& out,
                                                    const GridSpec& grid, const SaftmOptions& options) {
  auto s = make_system(panel, spec, prop, out, options);
  auto eval = [&](const VectorXd& psi) {
    detail::GridPoint g;
    g.statistic = statistic_at(s, panel, spec, psi, options.alpha, &g.artificial);
    return g;
  };
  auto result = detail::run_grid(spec.p(), grid, eval);
  auto& res = result.first;
  res.method = "saftm";
  res.psi_names = spec.psi_names();
  res.metric("alpha", options.alpha);
  std::size_t undefined = 0;
  for (double t : result.second.statistic) undefined += !std::isfinite(t);
  if (undefined)
    res.warnings.push_back(std::to_string(undefined) +
                           " grid points have an undefined statistic (every event artificially censored)");
  return result;
}

}  // namespace gestimate
