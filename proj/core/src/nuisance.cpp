#include "gestimate/nuisance.hpp"

#include <cmath>
#include <numbers>

#include "gestimate/error.hpp"
#include "gestimate/linalg.hpp"

namespace gestimate {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* family_name(Family f) { return f == Family::bernoulli_logit ? "bernoulli" : "gaussian"; }

Family parse_family(const std::string& name) {
  if (name == "bernoulli" || name == "bernoulli-logit" || name == "binomial") return Family::bernoulli_logit;
  if (name == "gaussian" || name == "gaussian-identity") return Family::gaussian_identity;
  throw ConfigError("unknown family '" + name + "'");
}

FeatureMap FeatureMap::parse(const std::vector<std::string>& exprs, const Symbols& symbols) {
  return parse_per_time({exprs}, symbols);
}

FeatureMap FeatureMap::parse_per_time(const std::vector<std::vector<std::string>>& exprs, const Symbols& symbols) {
  FeatureMap f;
  for (const auto& list : exprs) {
    std::vector<Expression> parsed;
    for (const auto& e : list) parsed.push_back(Expression::parse(e, symbols));
    f.exprs_.push_back(std::move(parsed));
    f.names_.push_back(list);
  }
  return f;
}

const std::vector<Expression>& FeatureMap::list(int m) const {
  if (exprs_.empty()) throw ConfigError("empty feature map");
  if (exprs_.size() == 1) return exprs_[0];
  if (m < 0 || m >= static_cast<int>(exprs_.size()))
    throw ConfigError("feature map has no entry for time " + std::to_string(m));
  return exprs_[m];
}

const std::vector<std::string>& FeatureMap::names(int m) const {
  list(m);
  return names_.size() == 1 ? names_[0] : names_[m];
}

VectorXd FeatureMap::eval(const VariableSource& h, int m) const {
  const auto& l = list(m);
  VectorXd out(l.size());
  for (std::size_t j = 0; j < l.size(); ++j) out[j] = l[j].eval(h, m);
  return out;
}

std::vector<std::size_t> at_risk(const Panel& panel, int m) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < panel.n(); ++i)
    if (m < static_cast<int>(panel.subject(i).a.size())) rows.push_back(i);
  return rows;
}

MatrixXd history_design(const Panel& panel, const FeatureMap& features, int m, const std::vector<std::size_t>& rows,
                        bool with_current_treatment) {
  MatrixXd X(rows.size(), features.size(m));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    HistoryView h(panel, panel.subject(rows[r]), m);
    X.row(r) = with_current_treatment ? features.eval(h, m) : features.eval(h.without_current_treatment(), m);
  }
  return X;
}

bool PropensityFit::has_time(int m) const {
  if (known_) return true;
  for (const auto& t : times_)
    if (t.m == m) return true;
  return false;
}

const PropensityTime& PropensityFit::at(int m) const {
  for (const auto& t : times_)
    if (t.m == m) return t;
  throw DataError("no propensity model for time " + std::to_string(m));
}

double PropensityFit::linear_predictor(const HistoryView& h) const {
  if (known_) {
    double p = known_(h.without_current_treatment());
    return family_ == Family::bernoulli_logit ? logit(p) : p;
  }
  const auto& t = at(h.m());
  return features_.eval(h.without_current_treatment(), h.m()).dot(t.alpha);
}

double PropensityFit::predict(const HistoryView& h) const {
  if (known_) return known_(h.without_current_treatment());
  double eta = linear_predictor(h);
  return family_ == Family::bernoulli_logit ? expit(eta) : eta;
}

double PropensityFit::variance(int m) const {
  if (known_) return times_.empty() ? 1.0 : times_[0].sigma2;
  return at(m).sigma2;
}

double PropensityFit::density(const HistoryView& h) const {
  double mu = predict(h);
  double a = h.treatment(h.m());
  if (family_ == Family::bernoulli_logit) return a == 1.0 ? mu : 1.0 - mu;
  double s2 = variance(h.m());
  return std::exp(-0.5 * (a - mu) * (a - mu) / s2) / std::sqrt(2.0 * std::numbers::pi * s2);
}

PropensityFit fit_propensity(const Panel& panel, const FeatureMap& features, Family family,
                             const std::vector<int>& times, const OffsetFn& offset) {
  PropensityFit fit;
  fit.family_ = family;
  fit.features_ = features;
  fit.estimated_ = true;
  std::vector<int> ts = times;
  if (ts.empty())
    for (int m = 0; m <= panel.K(); ++m) ts.push_back(m);
  if (family == Family::bernoulli_logit && !panel.binary_treatment())
    throw DataError("bernoulli propensity needs a 0/1 treatment");
  for (int m : ts) {
    auto rows = at_risk(panel, m);
    if (rows.empty()) continue;
    MatrixXd X = history_design(panel, features, m, rows);
    VectorXd a(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) a[r] = panel.subject(rows[r]).a[m];
    PropensityTime t;
    t.m = m;
    if (family == Family::bernoulli_logit) {
      VectorXd off;
      if (offset) {
        off.resize(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) off[r] = offset(rows[r], m);
      }
      auto res = logistic_fit(X, a, offset ? &off : nullptr, features.names(m));
      t.alpha = res.coef;
      t.iterations = res.iterations;
      t.max_gradient = res.max_gradient;
      for (Eigen::Index r = 0; r < res.prob.size(); ++r)
        if (!(res.prob[r] > 0.0 && res.prob[r] < 1.0))
          throw NumericalError("fitted propensity reaches 0 or 1 at time " + std::to_string(m));
    } else {
      if (offset) throw DataError("offsets are only supported for the bernoulli propensity");
      auto ls = least_squares(X, a);
      t.alpha = ls.coef;
      double n = rows.size();
      t.sigma2 = ls.residual.squaredNorm() / std::max(1.0, n - X.cols());
      t.max_gradient = (X.transpose() * ls.residual).cwiseAbs().maxCoeff() / n;
    }
    fit.times_.push_back(std::move(t));
  }
  return fit;
}

PropensityFit fixed_propensity(const FeatureMap& features, Family family, std::vector<VectorXd> alpha, double sigma2) {
  PropensityFit fit;
  fit.family_ = family;
  fit.features_ = features;
  fit.estimated_ = false;
  for (std::size_t m = 0; m < alpha.size(); ++m) {
    PropensityTime t;
    t.m = static_cast<int>(m);
    t.alpha = std::move(alpha[m]);
    t.sigma2 = sigma2;
    fit.times_.push_back(std::move(t));
  }
  return fit;
}

PropensityFit known_propensity(KnownMean mean, Family family, int K, double sigma2) {
  PropensityFit fit;
  fit.family_ = family;
  fit.known_ = std::move(mean);
  fit.estimated_ = false;
  for (int m = 0; m <= K; ++m) {
    PropensityTime t;
    t.m = m;
    t.sigma2 = sigma2;
    fit.times_.push_back(t);
  }
  return fit;
}

const OutcomeSlotFit& OutcomeFit::at(int m, int k) const {
  for (const auto& s : slots)
    if (s.m == m && s.k == k) return s;
  throw DataError("no outcome working model for (m, k) = (" + std::to_string(m) + ", " + std::to_string(k) + ")");
}

double OutcomeFit::predict(int m, int k, const HistoryView& h) const {
  return features.eval(h.without_current_treatment(), m).dot(at(m, k).beta);
}

OutcomeFit fit_outcome_working(const Panel& panel, const BlipSpec& spec, const VectorXd& psi,
                               const FeatureMap& features) {
  OutcomeFit fit;
  fit.features = features;
  for (int m = 0; m <= panel.K(); ++m) {
    auto rows = at_risk(panel, m);
    MatrixXd X = history_design(panel, features, m, rows);
    std::vector<VectorXd> u;
    u.reserve(rows.size());
    for (auto i : rows) u.push_back(blipdown_snmm(spec, panel, panel.subject(i), psi, m));
    auto ks = components_after(panel, m);
    for (std::size_t j = 0; j < ks.size(); ++j) {
      OutcomeSlotFit s;
      s.m = m;
      s.k = ks[j];
      s.rows = rows;
      s.response.resize(rows.size());
      for (std::size_t r = 0; r < rows.size(); ++r) s.response[r] = u[r][j];
      auto ls = least_squares(X, s.response);
      s.beta = ls.coef;
      s.fitted = ls.fitted;
      s.sigma2 = ls.sigma2;
      fit.slots.push_back(std::move(s));
    }
  }
  return fit;
}

OutcomeMeanFit::OutcomeMeanFit(FeatureMap features, Family family, VectorXd coef)
    : features_(std::move(features)), family_(family), coef_(std::move(coef)) {}

double OutcomeMeanFit::mean(const HistoryView& h) const {
  double eta = features_.eval(h, h.m()).dot(coef_);
  return family_ == Family::bernoulli_logit ? expit(eta) : eta;
}

OutcomeMeanFit fit_outcome_mean(const Panel& panel, const FeatureMap& features, Family family) {
  if (panel.K() != 0) throw DataError("outcome-mean model needs a point-treatment panel");
  auto rows = at_risk(panel, 0);
  MatrixXd X = history_design(panel, features, 0, rows, true);
  VectorXd y(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) y[r] = panel.subject(rows[r]).y[1];
  if (family == Family::bernoulli_logit) {
    auto res = logistic_fit(X, y, nullptr, features.names(0));
    return OutcomeMeanFit(features, family, res.coef);
  }
  return OutcomeMeanFit(features, family, least_squares(X, y).coef);
}

double tilted_propensity(double p, double q) {
  if (std::abs(q) > 700) throw NumericalError("sensitivity tilt overflows exp (|q| > 700)");
  if (q == 0.0) return p;
  double e = std::exp(q);
  return p * e / (p * e + (1.0 - p));
}

double tilted_propensity(const PropensityFit& fit, const SensitivityFunction& q, double u, const HistoryView& h) {
  if (fit.family() != Family::bernoulli_logit) throw DataError("tilted propensity needs a binary treatment");
  HistoryView hm = h.without_current_treatment();
  if (q(u, hm, 0.0) != 0.0) throw ConfigError("sensitivity function must vanish at a = 0");
  return tilted_propensity(fit.predict(h), q(u, hm, 1.0));
}

}  // namespace gestimate
