#include "gestimate/gest.hpp"

#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>

#include "gestimate/error.hpp"
#include "gestimate/linalg.hpp"
#include "system.hpp"

namespace gestimate {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* mode_name(SolveMode mode) {
  switch (mode) {
    case SolveMode::closed_form:
      return "closed-form";
    case SolveMode::root_find:
      return "root-find";
    case SolveMode::grid:
      return "grid";
  }
  return "closed-form";
}

VectorXd EstimateResult::se() const {
  if (cov.size() == 0) return VectorXd::Constant(psi.size(), std::numeric_limits<double>::quiet_NaN());
  return cov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

MatrixXd sandwich_cov(const StackedScores& scores) {
  const MatrixXd& C = scores.contributions;
  const double n = static_cast<double>(C.rows());
  const Eigen::Index q = C.cols();
  MatrixXd A;
  if (scores.jacobian.size() > 0) {
    A = scores.jacobian / n;
  } else {
    if (!scores.evaluate) throw DataError("sandwich needs either a jacobian or an evaluation function");
    A.resize(q, q);
    for (Eigen::Index j = 0; j < q; ++j) {
      double h = 1e-5 * std::max(1.0, std::abs(scores.theta[j]));
      VectorXd tp = scores.theta, tm = scores.theta;
      tp[j] += h;
      tm[j] -= h;
      A.col(j) = (scores.evaluate(tp).colwise().sum() - scores.evaluate(tm).colwise().sum()).transpose() / (2.0 * h * n);
    }
  }
  MatrixXd B = C.transpose() * C / n;
  Eigen::FullPivLU<MatrixXd> lu(A);
  if (!lu.isInvertible()) throw NumericalError("singular bread matrix in sandwich variance");
  MatrixXd Ainv = lu.inverse();
  MatrixXd full = Ainv * B * Ainv.transpose() / n;
  MatrixXd cov = full.block(scores.psi_offset, scores.psi_offset, scores.psi_dim, scores.psi_dim);
  return 0.5 * (cov + cov.transpose());
}

namespace {

void efficiency_note(EstimateResult& res, const Panel& panel, const OutcomeModel& out) {
  if (out.zero) {
    res.notes.push_back("outcome working model set to E{U(psi) | history} = 0; valid when the propensity model is correct");
    return;
  }
  if (panel.K() >= 1) {
    bool has_prev = true;
    for (int m = 1; m <= panel.K(); ++m) {
      bool any = false;
      for (const auto& nm : out.features.names(m)) any = any || nm.find('Y') != std::string::npos;
      has_prev = has_prev && any;
    }
    if (!has_prev)
      res.notes.push_back(
          "outcome working model omits the previous outcome; the default index is valid but may not be locally "
          "efficient");
  }
}

EstimateResult run_mean_model(const Panel& panel, const BlipSpec& spec, const PropensityFit& prop,
                              const OutcomeModel& out, const GestOptions& opt, const std::string& prefix) {
  if (spec.link() == Link::logit) throw DataError("logit link needs gest_logistic_smm");
  spec.check_panel(panel);
  auto data = detail::snmm_data(panel, spec, out, opt.index);
  auto sys = detail::build_system(panel, spec.p(), prop, data.plans, detail::snmm_response(data, spec.link()));
  detail::SolveResult sol;
  if (spec.link() == Link::identity && !opt.force_root_finder)
    sol = detail::solve_linear(sys);
  else
    sol = detail::solve_newton(sys, opt.start.value_or(VectorXd::Zero(spec.p())), opt.max_iter, opt.tol);
  EstimateResult res;
  res.method = prefix + "-" + link_name(spec.link());
  res.psi_names = spec.psi_names();
  detail::finish_result(res, sys, sol);
  efficiency_note(res, panel, out);
  if (!prop.estimated()) res.notes.push_back("propensity treated as known; no propensity score block stacked");
  return res;
}

}  // namespace

EstimateResult gest_smm(const Panel& panel, const BlipSpec& spec, const PropensityFit& prop, const OutcomeModel& out,
                        const GestOptions& options) {
  if (panel.K() != 0) throw DataError("gest_smm needs a point-treatment panel (K = 0)");
  return run_mean_model(panel, spec, prop, out, options, "smm");
}

EstimateResult gest_snmm(const Panel& panel, const BlipSpec& spec, const PropensityFit& prop,
                         const OutcomeModel& out, const GestOptions& options) {
  return run_mean_model(panel, spec, prop, out, options, "snmm");
}

ScoreTest score_test(const Panel& panel, const BlipSpec& spec, const PropensityFit& prop, const OutcomeModel& out,
                     const VectorXd& psi0, const GestOptions& options) {
  spec.check_panel(panel);
  auto data = detail::snmm_data(panel, spec, out, options.index);
  auto sys = detail::build_system(panel, spec.p(), prop, data.plans, detail::snmm_response(data, spec.link()));
  auto ev = sys.evaluate(psi0, false);
  ScoreTest t;
  t.statistic = sys.statistic(ev);
  t.df = spec.p();
  if (!std::isfinite(t.statistic)) throw NumericalError("score test variance is singular");
  boost::math::chi_squared chi(t.df);
  t.p_value = boost::math::cdf(boost::math::complement(chi, std::max(0.0, t.statistic)));
  return t;
}

EstimateResult gest_logistic_smm(const Panel& panel, const BlipSpec& spec, const PropensityFit& prop,
                                 const MeanPredictor& outcome_mean, const OutcomeModel& out,
                                 const GestOptions& options) {
  if (panel.K() != 0) throw DataError("logistic SMM needs a point-treatment panel (K = 0)");
  if (spec.link() != Link::logit) throw DataError("gest_logistic_smm needs the logit link");
  spec.check_panel(panel);
  auto rows = at_risk(panel, 0);
  detail::SlotPlan plan;
  plan.m = 0;
  plan.k = 1;
  plan.rows = rows;
  plan.design = out.zero ? MatrixXd(rows.size(), 0) : history_design(panel, out.features, 0, rows);
  plan.index = options.index ? options.index : detail::default_index(spec);
  MatrixXd G(rows.size(), spec.p());
  VectorXd lm(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& rec = panel.subject(rows[r]);
    if (rec.y[1] != 0.0 && rec.y[1] != 1.0) throw DataError("logistic SMM needs a binary outcome");
    HistoryView h(panel, rec, 0);
    double mu = outcome_mean.mean(h);
    if (!(mu > 0.0 && mu < 1.0)) throw NumericalError("fitted outcome mean outside (0, 1) for subject " + rec.id);
    lm[r] = logit(mu);
    G.row(r) = blip_features(spec, h, 0, 1).transpose();
  }
  detail::ResponseFn fn = [G, lm](const VectorXd& psi, bool derivative) {
    detail::Response resp;
    VectorXd q = (lm - G * psi).unaryExpr([](double x) { return expit(x); });
    if (derivative) resp.dq.push_back(-((q.array() * (1.0 - q.array())).matrix().asDiagonal() * G));
    resp.q.push_back(std::move(q));
    return resp;
  };
  auto sys = detail::build_system(panel, spec.p(), prop, {plan}, fn);
  auto sol = detail::solve_newton(sys, options.start.value_or(VectorXd::Zero(spec.p())), options.max_iter, options.tol);
  EstimateResult res;
  res.method = "logistic-smm";
  res.psi_names = spec.psi_names();
  detail::finish_result(res, sys, sol);
  res.notes.push_back("not doubly robust; consistency requires the outcome-mean model");
  res.notes.push_back("outcome-mean model treated as fixed in the sandwich variance");
  return res;
}

}  // namespace gestimate
