#include "gestimate/blip.hpp"

#include <cmath>
#include <limits>

#include "gestimate/error.hpp"
#include "gestimate/linalg.hpp"

namespace gestimate {

using Eigen::VectorXd;

const char* link_name(Link link) {
  switch (link) {
    case Link::identity:
      return "identity";
    case Link::log:
      return "log";
    case Link::logit:
      return "logit";
  }
  return "identity";
}

Link parse_link(const std::string& name) {
  if (name == "identity") return Link::identity;
  if (name == "log") return Link::log;
  if (name == "logit") return Link::logit;
  throw ConfigError("unknown link '" + name + "'");
}

namespace {

std::vector<std::string> default_names(int p, std::vector<std::string> names) {
  if (names.empty())
    for (int j = 0; j < p; ++j) names.push_back("psi" + std::to_string(j));
  if (static_cast<int>(names.size()) != p) throw ConfigError("psi_names must have p entries");
  return names;
}

bool treatment_at(const VarRef& r, int m, int k, int time) {
  return r.kind == VarKind::treatment && r.resolve(m, k) == time;
}

void check_term_common(int m, int k, const Expression& e, int psi_index, int p, int max_outcome) {
  if (m < 0) throw ConfigError("blip term with negative source_m");
  if (k < m + 1) throw ConfigError("blip term needs target_k >= source_m + 1 ('" + e.text() + "')");
  if (psi_index < 0 || psi_index >= p)
    throw ConfigError("psi_index " + std::to_string(psi_index) + " outside 0.." + std::to_string(p - 1));
  if (!e.has_factor([&](const VarRef& r) { return treatment_at(r, m, k, m); }))
    throw ConfigError("blip term '" + e.text() + "' must contain a factor A[" + std::to_string(m) +
                      "] so that it vanishes at the reference level");
  bool future = e.references([&](const VarRef& r) {
    int t = r.resolve(m, k);
    if (r.kind == VarKind::time) return false;
    if (r.kind == VarKind::outcome) return t > max_outcome;
    return t > m;
  });
  if (future) throw ConfigError("blip term '" + e.text() + "' reads values after its source time");
}

class SndmSource : public VariableSource {
 public:
  SndmSource(const HistoryView& h, const std::vector<std::vector<double>>& u, int k, bool blipped = false)
      : h_(h), u_(u), k_(k), blipped_(blipped) {}
  double value(VarKind kind, int cov, int time) const override {
    const int m = h_.m();
    if (kind == VarKind::outcome && time > m) {
      if (blipped_ && time < k_) return u_[m][time - m - 1];
      if (time == m + 1) return h_.record().y[time];
      if (time < k_) return u_[m + 1][time - m - 2];
      throw DataError("distribution blip reads Y[" + std::to_string(time) + "] beyond its earlier outcomes");
    }
    return h_.value(kind, cov, time);
  }

 private:
  const HistoryView& h_;
  const std::vector<std::vector<double>>& u_;
  int k_;
  bool blipped_;
};

}  // namespace

BlipSpec::BlipSpec(Link link, std::vector<BlipTerm> terms, int p, std::vector<std::string> psi_names)
    : link_(link), terms_(std::move(terms)), p_(p), psi_names_(default_names(p, std::move(psi_names))) {
  if (p <= 0) throw ConfigError("blip needs p >= 1");
  for (const auto& t : terms_) check_term_common(t.source_m, t.target_k, t.expression, t.psi_index, p, t.source_m);
}

int BlipSpec::max_source() const {
  int mx = -1;
  for (const auto& t : terms_) mx = std::max(mx, t.source_m);
  return mx;
}

int BlipSpec::max_target() const {
  int mx = -1;
  for (const auto& t : terms_) mx = std::max(mx, t.target_k);
  return mx;
}

void BlipSpec::check_panel(const Panel& panel) const {
  for (const auto& t : terms_) {
    if (t.source_m > panel.K()) throw ConfigError("blip source_m beyond K");
    if (!panel.is_outcome_time(t.target_k))
      throw ConfigError("blip target_k = " + std::to_string(t.target_k) + " is not a declared outcome time");
  }
}

SndmSpec::SndmSpec(std::vector<BlipTerm> terms, int p, std::vector<std::string> psi_names)
    : terms_(std::move(terms)), p_(p), psi_names_(default_names(p, std::move(psi_names))) {
  if (p <= 0) throw ConfigError("distribution blip needs p >= 1");
  for (const auto& t : terms_)
    check_term_common(t.source_m, t.target_k, t.expression, t.psi_index, p, t.target_k - 1);
}

void SndmSpec::check_panel(const Panel& panel) const {
  for (int k = 1; k <= panel.K() + 1; ++k)
    if (!panel.is_outcome_time(k))
      throw ConfigError("distribution blips need an outcome at every time 1..K+1 (missing " + std::to_string(k) + ")");
  for (const auto& t : terms_)
    if (t.source_m > panel.K() || t.target_k > panel.K() + 1) throw ConfigError("distribution blip term out of range");
}

SaftmSpec::SaftmSpec(std::vector<SaftmTerm> terms, int p, std::vector<std::string> psi_names)
    : terms_(std::move(terms)), p_(p), psi_names_(default_names(p, std::move(psi_names))) {
  if (p <= 0) throw ConfigError("failure-time blip needs p >= 1");
  for (const auto& t : terms_) {
    if (t.psi_index < 0 || t.psi_index >= p) throw ConfigError("psi_index outside 0..p-1");
    // checked against a generic interval m = 5 for relative terms
    int m = t.source_m < 0 ? 5 : t.source_m;
    if (!t.expression.has_factor([&](const VarRef& r) { return treatment_at(r, m, -1, m); }))
      throw ConfigError("failure-time blip term '" + t.expression.text() + "' must contain a factor A[m]");
    if (t.expression.references([](const VarRef& r) { return r.kind == VarKind::outcome; }))
      throw ConfigError("failure-time blip terms cannot read outcomes");
  }
}

VectorXd SaftmSpec::features(const HistoryView& h) const {
  VectorXd f = VectorXd::Zero(p_);
  for (const auto& t : terms_)
    if (t.source_m < 0 || t.source_m == h.m()) f[t.psi_index] += t.expression.eval(h, h.m());
  return f;
}

VectorXd blip_features(const BlipSpec& spec, const HistoryView& h, int m, int k) {
  if (h.m() != m) throw DataError("blip evaluation needs the history at its source time");
  if (k < m + 1) throw DataError("blip index needs m <= k-1");
  VectorXd f = VectorXd::Zero(spec.p());
  for (const auto& t : spec.terms())
    if (t.source_m == m && t.target_k == k) f[t.psi_index] += t.expression.eval(h, m, k);
  return f;
}

double eval_blip(const BlipSpec& spec, const HistoryView& h, const VectorXd& psi, int m, int k) {
  if (psi.size() != spec.p())
    throw DataError("psi has dimension " + std::to_string(psi.size()) + ", blip expects " + std::to_string(spec.p()));
  return blip_features(spec, h, m, k).dot(psi);
}

double transform_point(const BlipSpec& spec, const Panel& panel, const SubjectRecord& record, const VectorXd& psi,
                       const MeanPredictor* outcome_model) {
  if (panel.K() != 0) throw DataError("transform_point needs a point-treatment panel (K = 0)");
  HistoryView h(panel, record, 0);
  double g = eval_blip(spec, h, psi, 0, 1);
  double y = record.y[1];
  switch (spec.link()) {
    case Link::identity:
      return y - g;
    case Link::log:
      if (std::abs(g) > 700) throw NumericalError("log-link blip overflows exp");
      return y * std::exp(-g);
    case Link::logit: {
      if (!outcome_model) throw DataError("logit link needs a fitted outcome-mean model");
      double mu = outcome_model->mean(h);
      if (!(mu > 0.0 && mu < 1.0)) throw NumericalError("fitted outcome mean outside (0, 1)");
      return expit(logit(mu) - g);
    }
  }
  return y;
}

std::vector<int> components_after(const Panel& panel, int m) {
  std::vector<int> out;
  for (int k : panel.outcome_times())
    if (k > m) out.push_back(k);
  return out;
}

VectorXd cumulative_features(const BlipSpec& spec, const Panel& panel, const SubjectRecord& record, int m, int k) {
  VectorXd g = VectorXd::Zero(spec.p());
  for (const auto& t : spec.terms()) {
    if (t.target_k != k || t.source_m < m || t.source_m >= k) continue;
    HistoryView h(panel, record, t.source_m);
    g[t.psi_index] += t.expression.eval(h, t.source_m, k);
  }
  return g;
}

VectorXd blipdown_snmm(const BlipSpec& spec, const Panel& panel, const SubjectRecord& record, const VectorXd& psi,
                       int m) {
  if (spec.link() == Link::logit) throw DataError("sequential blip-down is not available for the logit link");
  if (m < 0 || m > panel.K()) throw DataError("blip-down index m outside 0..K");
  if (psi.size() != spec.p()) throw DataError("psi dimension mismatch");
  auto ks = components_after(panel, m);
  VectorXd u(ks.size());
  for (std::size_t j = 0; j < ks.size(); ++j) {
    double g = cumulative_features(spec, panel, record, m, ks[j]).dot(psi);
    double y = record.y[ks[j]];
    if (spec.link() == Link::identity) {
      u[j] = y - g;
    } else {
      if (std::abs(g) > 700) throw NumericalError("log-link blip overflows exp");
      u[j] = y * std::exp(-g);
    }
  }
  return u;
}

Eigen::MatrixXd blip_jacobian(const BlipSpec& spec, const Panel& panel, const SubjectRecord& record,
                              const VectorXd& psi, int m) {
  if (spec.link() == Link::logit) throw DataError("sequential blip-down is not available for the logit link");
  auto ks = components_after(panel, m);
  Eigen::MatrixXd J(ks.size(), spec.p());
  for (std::size_t j = 0; j < ks.size(); ++j) {
    VectorXd g = cumulative_features(spec, panel, record, m, ks[j]);
    if (spec.link() == Link::identity)
      J.row(j) = -g.transpose();
    else
      J.row(j) = -(record.y[ks[j]] * std::exp(-g.dot(psi))) * g.transpose();
  }
  return J;
}

VectorXd sndm_features(const SndmSpec& spec, const HistoryView& h, const std::vector<std::vector<double>>& u, int k) {
  SndmSource src(h, u, k);
  VectorXd f = VectorXd::Zero(spec.p());
  for (const auto& t : spec.terms())
    if (t.source_m == h.m() && t.target_k == k) f[t.psi_index] += t.expression.eval(src, h.m(), k);
  return f;
}

VectorXd sndm_index_features(const SndmSpec& spec, const HistoryView& h, const std::vector<std::vector<double>>& u,
                             int k) {
  SndmSource src(h, u, k, true);
  VectorXd f = VectorXd::Zero(spec.p());
  for (const auto& t : spec.terms())
    if (t.source_m == h.m() && t.target_k == k) f[t.psi_index] += t.expression.eval(src, h.m(), k);
  return f;
}

std::vector<std::vector<double>> sndm_recursion(const SndmSpec& spec, const Panel& panel, const SubjectRecord& record,
                                                const VectorXd& psi) {
  if (psi.size() != spec.p()) throw DataError("psi dimension mismatch");
  const int K = panel.K();
  std::vector<std::vector<double>> u(K + 2);
  for (int m = K; m >= 0; --m) {
    HistoryView h(panel, record, m);
    u[m].resize(K + 1 - m);
    for (int k = m + 1; k <= K + 1; ++k) {
      double last = k == m + 1 ? record.y[m + 1] : u[m + 1][k - m - 2];
      u[m][k - m - 1] = last - sndm_features(spec, h, u, k).dot(psi);
    }
  }
  return u;
}

VectorXd blipdown_sndm(const SndmSpec& spec, const Panel& panel, const SubjectRecord& record, const VectorXd& psi,
                       int m) {
  if (m < 0 || m > panel.K()) throw DataError("blip-down index m outside 0..K");
  auto u = sndm_recursion(spec, panel, record, psi);
  return Eigen::Map<const VectorXd>(u[m].data(), u[m].size());
}

}  // namespace gestimate
