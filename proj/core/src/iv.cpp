#include <cmath>
#include <limits>

#include "gestimate/error.hpp"
#include "gestimate/gest.hpp"
#include "gestimate/linalg.hpp"
#include "system.hpp"

namespace gestimate {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

bool reads_later_covariate(const Expression& e) {
  return e.references([](const VarRef& r) {
    return r.kind == VarKind::covariate && !(r.base == IndexBase::absolute && r.offset == 0);
  });
}

// features of all later blips with every treatment set to 1; d_0 = a_0 times this vector
VectorXd later_features(const BlipSpec& spec, const Panel& panel, const SubjectRecord& rec) {
  std::vector<double> ones(panel.K() + 1, 1.0);
  VectorXd h = VectorXd::Zero(spec.p());
  for (const auto& t : spec.terms()) {
    auto v = HistoryView::counterfactual(panel, rec, t.source_m, ones.data());
    h[t.psi_index] += t.expression.eval(v, t.source_m, t.target_k);
  }
  return h;
}

// heteroskedasticity-robust t statistic of the last column in a least-squares fit
double last_t(const MatrixXd& X, const VectorXd& y) {
  auto ls = least_squares(X, y);
  MatrixXd bread = (X.transpose() * X).inverse();
  MatrixXd meat = X.transpose() * ls.residual.array().square().matrix().asDiagonal() * X;
  MatrixXd V = bread * meat * bread;
  Eigen::Index j = X.cols() - 1;
  return V(j, j) > 0.0 ? ls.coef[j] / std::sqrt(V(j, j)) : 0.0;
}

}  // namespace

EstimateResult gest_iv(const Panel& panel, const BlipSpec& spec, const PropensityFit& instrument,
                       const OutcomeModel& out) {
  if (panel.K() < 1) throw DataError("instrumental-variable analysis needs K >= 1 (A_0 is the instrument)");
  if (spec.link() == Link::logit) throw DataError("logit link is not supported for instrumental variables");
  spec.check_panel(panel);
  for (const auto& t : spec.terms()) {
    if (t.source_m == 0) throw ConfigError("blip terms may not involve the instrument a_0");
    if (reads_later_covariate(t.expression))
      throw ConfigError("instrumental-variable blips may read covariates only at time 0: '" + t.expression.text() + "'");
  }
  if (!out.zero)
    for (const auto& e : out.features.names(0))
      if (reads_later_covariate(Expression::parse(e, panel.symbols())))
        throw ConfigError("outcome working model may read covariates only at time 0");

  const auto* base = panel.subjects().data();
  std::vector<VectorXd> hvec(panel.n());
  for (std::size_t i = 0; i < panel.n(); ++i) hvec[i] = later_features(spec, panel, panel.subject(i));
  IndexMap index = [hvec, base](const HistoryView& h, int, int) -> VectorXd {
    return h.treatment(0) * hvec[&h.record() - base];
  };

  auto all = detail::snmm_data(panel, spec, out, index);
  detail::SnmmData data;
  for (std::size_t s = 0; s < all.plans.size(); ++s) {
    if (all.plans[s].m != 0) continue;
    data.plans.push_back(all.plans[s]);
    data.G.push_back(all.G[s]);
    data.y.push_back(all.y[s]);
  }
  auto sys = detail::build_system(panel, spec.p(), instrument, data.plans, detail::snmm_response(data, spec.link()));
  detail::SolveResult sol = spec.link() == Link::identity ? detail::solve_linear(sys)
                                                          : detail::solve_newton(sys, VectorXd::Zero(spec.p()), 100, 1e-8);
  EstimateResult res;
  res.method = "iv";
  res.psi_names = spec.psi_names();
  detail::finish_result(res, sys, sol);

  // first stage: association of the instrument with each treatment-effect feature
  const auto& rows = data.plans[0].rows;
  MatrixXd X(rows.size(), data.plans[0].design.cols() + 1);
  X.leftCols(data.plans[0].design.cols()) = data.plans[0].design;
  for (std::size_t r = 0; r < rows.size(); ++r) X(r, X.cols() - 1) = panel.subject(rows[r]).a[0];
  if (data.plans[0].design.cols() == 0) {
    X.conservativeResize(Eigen::NoChange, 2);
    X.col(1) = X.col(0);
    X.col(0).setOnes();
  }
  double tmin = std::numeric_limits<double>::infinity();
  for (int j = 0; j < spec.p(); ++j) {
    VectorXd g = data.G[0].col(j);
    if (g.maxCoeff() - g.minCoeff() <= 0.0) continue;
    try {
      tmin = std::min(tmin, std::abs(last_t(X, g)));
    } catch (const NumericalError&) {
      tmin = 0.0;
    }
  }
  if (std::isfinite(tmin)) {
    res.metric("first_stage_t", tmin);
    if (tmin < 2.0) res.warnings.push_back("weak instrument: first-stage |t| = " + std::to_string(tmin) + " < 2");
  }
  res.notes.push_back("index functions restricted to time 0 (d_m = 0 for m > 0)");
  return res;
}

}  // namespace gestimate
