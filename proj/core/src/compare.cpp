#include "gestimate/compare.hpp"

#include <cmath>
#include <numeric>

#include "gestimate/error.hpp"
#include "gestimate/linalg.hpp"
#include "gestimate/rng.hpp"

namespace gestimate {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void require_point(const Panel& panel, const char* what) {
  if (panel.K() != 0) throw DataError(std::string(what) + " needs a point-treatment panel (K = 0)");
  if (!panel.is_outcome_time(1)) throw DataError(std::string(what) + " needs the outcome Y_1");
}

EstimateResult scalar_result(const std::string& method, double psi, double var) {
  EstimateResult r;
  r.method = method;
  r.psi = VectorXd::Constant(1, psi);
  r.cov = MatrixXd::Constant(1, 1, var);
  r.converged = true;
  r.mode = SolveMode::closed_form;
  r.psi_names = {"A"};
  return r;
}

// least squares with HC0 sandwich; returns (coef, cov)
std::pair<VectorXd, MatrixXd> robust_ls(const MatrixXd& X, const VectorXd& y) {
  auto ls = least_squares(X, y);
  MatrixXd bread = (X.transpose() * X).ldlt().solve(MatrixXd::Identity(X.cols(), X.cols()));
  MatrixXd meat = X.transpose() * ls.residual.array().square().matrix().asDiagonal() * X;
  MatrixXd cov = bread * meat * bread;
  return {ls.coef, 0.5 * (cov + cov.transpose())};
}

}  // namespace

ArmMean fit_arm_means(const Panel& panel, const FeatureMap& features) {
  require_point(panel, "arm outcome models");
  std::vector<VectorXd> coef(2);
  for (int a = 0; a <= 1; ++a) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < panel.n(); ++i)
      if (panel.subject(i).a[0] == a) rows.push_back(i);
    if (rows.empty()) throw NumericalError("no subjects in treatment arm " + std::to_string(a));
    MatrixXd X = history_design(panel, features, 0, rows);
    VectorXd y(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) y[r] = panel.subject(rows[r]).y[1];
    coef[a] = least_squares(X, y).coef;
  }
  return [features, coef](const HistoryView& h, double a) {
    return features.eval(h.without_current_treatment(), 0).dot(coef[a == 1.0 ? 1 : 0]);
  };
}

IpwMsmResult fit_ipw_msm(const Panel& panel, const PropensityFit& prop, const ArmMean& arms) {
  require_point(panel, "IPW estimation");
  if (!panel.binary_treatment()) throw DataError("IPW estimation needs a binary treatment");
  const std::size_t n = panel.n();
  VectorXd aug(n), plain(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = panel.subject(i);
    HistoryView h(panel, rec, 0);
    double e = prop.predict(h);
    if (!(e > 0.0 && e < 1.0))
      throw NumericalError("fitted propensity is exactly 0 or 1 for subject " + rec.id);
    double a = rec.a[0], y = rec.y[1];
    double m1 = arms ? arms(h, 1.0) : 0.0, m0 = arms ? arms(h, 0.0) : 0.0;
    aug[i] = a * (y - m1) / e - (1.0 - a) * (y - m0) / (1.0 - e) + m1 - m0;
    plain[i] = a * y / e - (1.0 - a) * y / (1.0 - e);
  }
  auto summarize = [n](const VectorXd& phi, const std::string& method) {
    double psi = phi.mean();
    double var = (phi.array() - psi).square().sum() / (double(n) * double(n));
    auto r = scalar_result(method, psi, var);
    r.notes.push_back("propensity and arm models treated as fixed in the variance");
    return r;
  };
  IpwMsmResult out;
  out.augmented = summarize(aug, "ipw-msm");
  out.plain = summarize(plain, "ipw-plain");
  out.plain.notes.push_back("arm outcome models set to zero");
  return out;
}

EstimateResult fit_ols(const Panel& panel, const FeatureMap& features) {
  require_point(panel, "OLS");
  std::vector<std::size_t> rows(panel.n());
  std::iota(rows.begin(), rows.end(), 0);
  MatrixXd L = history_design(panel, features, 0, rows);
  MatrixXd X(rows.size(), L.cols() + 1);
  X.leftCols(L.cols()) = L;
  VectorXd y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    X(i, L.cols()) = panel.subject(i).a[0];
    y[i] = panel.subject(i).y[1];
  }
  auto [coef, cov] = robust_ls(X, y);
  Eigen::Index j = L.cols();
  return scalar_result("ols", coef[j], cov(j, j));
}

EstimateResult fit_ps_regression(const Panel& panel, const PropensityFit& prop) {
  require_point(panel, "propensity-score regression");
  if (!panel.binary_treatment()) throw DataError("propensity-score regression needs a binary treatment");
  const std::size_t n = panel.n();
  VectorXd e(n), y(n), a(n);
  for (std::size_t i = 0; i < n; ++i) {
    e[i] = prop.predict(HistoryView(panel, panel.subject(i), 0));
    y[i] = panel.subject(i).y[1];
    a[i] = panel.subject(i).a[0];
  }
  bool constant = e.maxCoeff() - e.minCoeff() <= 1e-12 * std::max(1.0, e.cwiseAbs().maxCoeff());
  MatrixXd X(n, constant ? 2 : 3);
  X.col(0).setOnes();
  if (!constant) X.col(1) = e;
  X.col(X.cols() - 1) = a;
  auto [coef, cov] = robust_ls(X, y);
  Eigen::Index j = X.cols() - 1;
  auto r = scalar_result("ps-regression", coef[j], cov(j, j));
  if (constant) r.warnings.push_back("propensity is constant; column dropped, fit reduces to Y ~ 1 + A");
  r.notes.push_back("propensity treated as fixed in the variance");
  return r;
}

VarianceReport analytic_variances(const DiscreteLaw& law, double sigma2, std::vector<double> delta,
                                  std::vector<double> psi, double psi_star) {
  const std::size_t s = law.prob.size();
  if (s == 0 || law.e.size() != s) throw DataError("discrete law needs matching probability and propensity lists");
  if (delta.empty()) delta.assign(s, 0.0);
  if (psi.empty()) psi.assign(s, 0.0);
  if (delta.size() != s || psi.size() != s) throw DataError("delta and psi need one value per stratum");
  if (!(sigma2 >= 0.0)) throw DataError("sigma2 must be nonnegative");
  double total = 0.0;
  for (std::size_t j = 0; j < s; ++j) {
    if (!(law.prob[j] >= 0.0)) throw DataError("stratum probabilities must be nonnegative");
    if (!(law.e[j] > 0.0 && law.e[j] < 1.0)) throw DataError("stratum propensity must lie strictly inside (0, 1)");
    total += law.prob[j];
  }
  if (std::abs(total - 1.0) > 1e-9) throw DataError("stratum probabilities must sum to 1");

  double ev = 0.0, einv = 0.0, evd2 = 0.0, evpsi = 0.0, eipw = 0.0;
  for (std::size_t j = 0; j < s; ++j) {
    double p = law.prob[j], e = law.e[j], v = e * (1.0 - e);
    ev += p * v;
    einv += p / v;
    evd2 += p * v * delta[j] * delta[j];
    evpsi += p * v * psi[j];
    double t = delta[j] + psi_star * (1.0 - e);
    eipw += p * t * t / v;
  }
  VarianceReport r;
  r.var_gest = sigma2 / ev;
  r.var_ipw = sigma2 * einv;
  r.var_gest_misspec = sigma2 / ev + evd2 / (ev * ev);
  r.var_ipw_misspec = sigma2 * einv + eipw;
  r.pooling_limit = evpsi / ev;
  r.sigma2 = sigma2;
  r.psi_star = psi_star;
  r.law = law;
  r.delta = std::move(delta);
  r.psi = std::move(psi);
  return r;
}

PoolingCheck pooling_check(const std::function<Panel(int rep)>& generate, int reps, const FeatureMap& propensity,
                           const FeatureMap& outcome, double analytic, int jobs) {
  if (reps < 2) throw ConfigError("pooling check needs at least 2 replications");
  std::vector<double> est(reps, std::numeric_limits<double>::quiet_NaN());
  parallel_for(reps, jobs, [&](std::size_t r) {
    try {
      Panel panel = generate(static_cast<int>(r));
      BlipSpec spec(Link::identity, {BlipTerm{1, 0, Expression::parse("A", panel.symbols()), 0}}, 1, {"A"});
      auto prop = fit_propensity(panel, propensity);
      est[r] = gest_smm(panel, spec, prop, OutcomeModel{outcome, false}).psi[0];
    } catch (const Error&) {
    }
  });
  PoolingCheck pc;
  pc.reps = reps;
  pc.analytic = analytic;
  for (double v : est)
    if (std::isfinite(v))
      pc.estimates.push_back(v);
    else
      ++pc.failures;
  const double m = pc.estimates.size();
  if (m < 2) throw NumericalError("pooling check: too few successful replications");
  pc.mc_mean = std::accumulate(pc.estimates.begin(), pc.estimates.end(), 0.0) / m;
  double ss = 0.0;
  for (double v : pc.estimates) ss += (v - pc.mc_mean) * (v - pc.mc_mean);
  pc.se_mc = std::sqrt(ss / (m - 1.0)) / std::sqrt(m);
  return pc;
}

}  // namespace gestimate
