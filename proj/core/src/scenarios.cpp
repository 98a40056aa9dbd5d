#include <cctype>
#include <cmath>
#include <limits>
#include <optional>

#include "gestimate/compare.hpp"
#include "gestimate/error.hpp"
#include "gestimate/linalg.hpp"
#include "gestimate/rng.hpp"
#include "gestimate/sim.hpp"

namespace gestimate {

using Eigen::VectorXd;

namespace {

const double nan_v = std::numeric_limits<double>::quiet_NaN();

// reads of a subject record while it is being generated
class PartialSource : public VariableSource {
 public:
  PartialSource(const SubjectRecord& rec, const std::vector<double>& grid) : rec_(rec), grid_(grid) {}
  double value(VarKind kind, int cov, int time) const override {
    switch (kind) {
      case VarKind::treatment:
        if (time < 0 || time >= static_cast<int>(rec_.a.size()))
          throw ConfigError("regime reads A[" + std::to_string(time) + "] before it is set");
        return rec_.a[time];
      case VarKind::covariate:
        if (time < 0 || time >= static_cast<int>(rec_.l.size()))
          throw ConfigError("regime reads a covariate at time " + std::to_string(time) + " before it is drawn");
        return rec_.l[time][cov];
      case VarKind::outcome:
        if (time < 1 || time >= static_cast<int>(rec_.y.size()) || std::isnan(rec_.y[time]))
          throw ConfigError("regime reads Y[" + std::to_string(time) + "] before it is drawn");
        return rec_.y[time];
      case VarKind::time:
        return grid_[time];
    }
    return 0.0;
  }

 private:
  const SubjectRecord& rec_;
  const std::vector<double>& grid_;
};

struct Draw {
  SubjectRecord rec;
  std::vector<double> baseline;
};

class Drawer {
 public:
  Drawer(const Scenario& s, Rng& rng, const RegimeSpec* regime, std::vector<double> grid)
      : s_(s), rng_(rng), regime_(regime), grid_(std::move(grid)) {}

  Draw operator()();

 private:
  double p(const std::string& k) const { return s_.param(k); }
  double treat(int m, const SubjectRecord& rec, double prob) {
    double natural = rng_.bernoulli(prob) ? 1.0 : 0.0;
    if (!regime_) return natural;
    PartialSource src(rec, grid_);
    return (m == 0 ? regime_->a0 : regime_->a1).eval(src, m);
  }
  void check_prob(double e) const {
    if (!(e > 0.0 && e < 1.0)) throw ConfigError("scenario " + s_.name + ": probability outside (0, 1)");
  }

  const Scenario& s_;
  Rng& rng_;
  const RegimeSpec* regime_;
  std::vector<double> grid_;
};

Draw Drawer::operator()() {
  Draw d;
  SubjectRecord& r = d.rec;
  const VectorXd& psi = s_.psi;
  const std::string& name = s_.name;
  r.y.assign(s_.K + 2, nan_v);

  if (name == "null" || name == "seq-confounded") {
    double L0 = rng_.normal();
    double y1 = 1.0 + 0.5 * L0 + rng_.normal(0.0, p("sd_y"));
    double V = rng_.normal();
    double y2 = 2.0 + 0.8 * L0 + V + rng_.normal(0.0, p("sd_y"));
    r.l.push_back({L0});
    double e0 = name == "null" ? 0.5 : expit(p("a00") + p("a01") * L0);
    check_prob(e0);
    r.a.push_back(treat(0, r, e0));
    double A0 = r.a[0];
    double L1 = p("l10") + 0.5 * L0 + p("l1a") * A0 + 0.8 * V + rng_.normal(0.0, 0.6);
    r.l.push_back({L1});
    double e1 = name == "null" ? 0.5 : expit(p("a10") + p("a11") * L1 + p("a12") * A0);
    check_prob(e1);
    r.a.push_back(treat(1, r, e1));
    double A1 = r.a[1];
    r.y[1] = y1;
    r.y[2] = y2 + (psi[3] + psi[4] * L0) * A0 + (psi[0] + psi[1] * L1 + psi[2] * A0) * A1;
    d.baseline = {y1, y2};
  } else if (name == "point-randomized" || name == "point-confounded" || name == "hidden-bias") {
    double L = rng_.normal();
    double y0 = 1.0 + p("b1") * L + rng_.normal();
    r.l.push_back({L});
    double eta = name == "point-randomized" ? 0.0 : p("a0") + p("a1") * L;
    if (name == "hidden-bias") eta += p("gamma") * y0;
    double e = expit(eta);
    check_prob(e);
    r.a.push_back(treat(0, r, e));
    r.y[1] = y0 + psi[0] * r.a[0];
    d.baseline = {y0};
  } else if (name == "near-positivity" || name == "heterogeneous") {
    const int levels = name == "near-positivity" ? 3 : 2;
    double L = static_cast<double>(rng_.index(levels));
    double y0 = L + rng_.normal();
    r.l.push_back({L});
    double e = expit(p("a0") + p("a1") * L);
    check_prob(e);
    r.a.push_back(treat(0, r, e));
    double effect = name == "near-positivity" ? psi[0] : L;
    r.y[1] = y0 + effect * r.a[0];
    d.baseline = {y0};
  } else if (name == "saftm-confounded") {
    double L0 = rng_.normal();
    double T0 = rng_.exponential(p("rate") * std::exp(p("rate_l") * L0));
    r.l.push_back({L0});
    double e0 = expit(-0.3 + 0.7 * L0);
    r.a.push_back(treat(0, r, e0));
    double A0 = r.a[0];
    double L1 = 0.5 * L0 + 0.4 * A0 + 0.5 * std::log(T0) + rng_.normal(0.0, 0.5);
    r.l.push_back({L1});
    double e1 = expit(-0.2 + 0.8 * L1);
    r.a.push_back(treat(1, r, e1));
    double A1 = r.a[1];
    // invert U_0 = int exp(psi A(t)) dt over the grid (0, 1, open last interval)
    double s0 = std::exp(psi[0] * A0), s1 = std::exp(psi[0] * A1);
    double T = T0 <= s0 ? T0 / s0 : 1.0 + (T0 - s0) / s1;
    double C = p("censor");
    r.censor_time = C;
    if (T < C) {
      r.event_time = T;
      r.event_observed = true;
    } else {
      r.event_observed = false;
    }
    d.baseline = {T0};
  } else if (name == "noncompliance") {
    double L0 = rng_.normal();
    double U = rng_.normal();
    double y0 = 1.0 + L0 + U + rng_.normal();
    r.l.push_back({L0});
    r.a.push_back(treat(0, r, 0.5));
    r.l.push_back({L0});
    double e1 = expit(-1.0 + p("first_stage") * r.a[0] + p("u_conf") * U + 0.3 * L0);
    r.a.push_back(treat(1, r, e1));
    r.y[2] = y0 + psi[0] * r.a[1];
    d.baseline = {y0};
  } else if (name == "mediation") {
    double L0 = rng_.normal();
    double V = rng_.normal();
    double y0 = 1.0 + 0.7 * L0 + V + rng_.normal();
    r.l.push_back({L0});
    r.a.push_back(treat(0, r, expit(-0.2 + 0.5 * L0)));
    double A0 = r.a[0];
    double L1 = 0.2 + 0.4 * L0 + 0.7 * A0 + 0.8 * V + rng_.normal(0.0, 0.6);
    r.l.push_back({L1});
    r.a.push_back(treat(1, r, expit(-0.5 + 0.9 * L1 + 0.3 * A0)));
    double A1 = r.a[1];
    r.y[2] = y0 + (psi[0] + psi[1] * A1) * A0 + (0.6 + 0.3 * L0) * A1;
    d.baseline = {y0};
  } else {
    throw ConfigError("unknown scenario '" + name + "'");
  }
  return d;
}

PanelLayout layout_of(const Scenario& s) {
  PanelLayout lay;
  lay.K = s.K;
  lay.covariate_names = {"L"};
  if (s.mode == "survival") {
    lay.survival = true;
    lay.time_grid = {0.0, 1.0, 2.0};
  } else {
    for (int k = 0; k <= s.K + 1; ++k) lay.time_grid.push_back(k);
    if (s.name == "noncompliance" || s.name == "mediation")
      lay.outcome_times = {2};
    else
      for (int k = 1; k <= s.K + 1; ++k) lay.outcome_times.push_back(k);
  }
  return lay;
}

}  // namespace

double Scenario::param(const std::string& key) const {
  auto it = params.find(key);
  if (it == params.end()) throw ConfigError("scenario " + name + " has no parameter '" + key + "'");
  return it->second;
}

std::vector<std::string> scenario_names() {
  return {"null",          "point-randomized", "point-confounded", "seq-confounded", "near-positivity",
          "heterogeneous", "saftm-confounded", "noncompliance",    "hidden-bias",    "mediation"};
}

Scenario make_scenario(const std::string& name, const std::map<std::string, double>& overrides) {
  Scenario s;
  s.name = name;
  auto set_psi = [&](std::vector<double> v, std::vector<std::string> names) {
    s.psi = Eigen::Map<VectorXd>(v.data(), v.size());
    s.psi_names = std::move(names);
  };
  if (name == "null" || name == "seq-confounded") {
    s.mode = "mean";
    s.K = 1;
    s.params = {{"sd_y", 0.5}, {"a00", -0.2}, {"a01", 0.8}, {"l10", 0.3}, {"l1a", -0.6},
                {"a10", -0.3}, {"a11", 1.0},  {"a12", 0.5}};
    if (name == "null")
      set_psi({0, 0, 0, 0, 0}, {"A1", "L1:A1", "A0:A1", "A0", "L0:A0"});
    else
      set_psi({1, 0.5, 0, 1, 0}, {"A1", "L1:A1", "A0:A1", "A0", "L0:A0"});
  } else if (name == "point-randomized" || name == "point-confounded" || name == "hidden-bias") {
    s.mode = name == "hidden-bias" ? "hidden-bias" : "mean";
    s.params = {{"b1", name == "point-confounded" ? 2.0 : 1.0}, {"a0", 0.0}, {"a1", 0.0}, {"gamma", 0.0}};
    if (name == "point-confounded") s.params["a0"] = -0.3, s.params["a1"] = 0.8;
    if (name == "hidden-bias") s.params["a0"] = -0.2, s.params["a1"] = 0.5, s.params["gamma"] = 0.5;
    set_psi({1.0}, {"A"});
  } else if (name == "near-positivity") {
    s.mode = "near-positivity";
    double a = logit(0.02);
    s.params = {{"a0", a}, {"a1", -a}};
    set_psi({1.0}, {"A"});
  } else if (name == "heterogeneous") {
    s.mode = "heterogeneous";
    double a = logit(0.1);
    s.params = {{"a0", a}, {"a1", -a}};
    set_psi({0.0}, {"A"});
  } else if (name == "saftm-confounded") {
    s.mode = "survival";
    s.K = 1;
    s.params = {{"rate", 0.4}, {"rate_l", 0.3}, {"censor", 3.0}};
    set_psi({0.5}, {"A"});
  } else if (name == "noncompliance") {
    s.mode = "iv";
    s.K = 1;
    s.params = {{"first_stage", 2.5}, {"u_conf", 0.8}};
    set_psi({1.0}, {"A1"});
    s.rank_preserving = true;
  } else if (name == "mediation") {
    s.mode = "mediation";
    s.K = 1;
    set_psi({1.0, 0.5}, {"A0", "A0:A1"});
  } else {
    throw ConfigError("unknown scenario '" + name + "'");
  }
  for (const auto& [k, v] : overrides) {
    if (k.rfind("psi", 0) == 0 && k.size() > 3 && std::isdigit(static_cast<unsigned char>(k[3]))) {
      int j = std::stoi(k.substr(3));
      if (j < 0 || j >= s.psi.size()) throw ConfigError("scenario " + name + " has no parameter '" + k + "'");
      s.psi[j] = v;
    } else {
      if (!s.params.count(k)) throw ConfigError("scenario " + name + " has no parameter '" + k + "'");
      s.params[k] = v;
    }
  }
  if (name == "heterogeneous") {
    // the homogeneous-blip G-estimator targets the variance-weighted average effect
    auto law = *scenario_law(s);
    s.psi[0] = analytic_variances(law.law, law.sigma2, {}, law.effects).pooling_limit;
  }
  return s;
}

std::optional<ScenarioLaw> scenario_law(const Scenario& s) {
  if (s.name != "near-positivity" && s.name != "heterogeneous") return std::nullopt;
  ScenarioLaw out;
  const int levels = s.name == "near-positivity" ? 3 : 2;
  for (int l = 0; l < levels; ++l) {
    out.law.prob.push_back(1.0 / levels);
    out.law.e.push_back(expit(s.param("a0") + s.param("a1") * l));
    out.effects.push_back(s.name == "near-positivity" ? s.psi[0] : double(l));
  }
  out.homogeneous = s.name == "near-positivity";
  return out;
}

Generated generate(const Scenario& scenario, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("scenario needs n >= 1");
  PanelLayout lay = layout_of(scenario);
  std::vector<SubjectRecord> subjects;
  subjects.reserve(n);
  Generated g;
  g.truth.scenario = scenario.name;
  g.truth.psi = scenario.psi;
  g.truth.psi_names = scenario.psi_names;
  g.truth.baseline.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, {i}));
    Drawer draw(scenario, rng, nullptr, lay.time_grid);
    Draw d = draw();
    d.rec.id = std::to_string(i + 1);
    subjects.push_back(std::move(d.rec));
    g.truth.baseline.push_back(std::move(d.baseline));
  }
  g.panel = Panel(lay, std::move(subjects));
  if (scenario.name == "seq-confounded" || scenario.name == "null") {
    const auto& p = scenario.psi;
    double l1 = scenario.param("l10") + scenario.param("l1a");
    g.truth.oracle.emplace_back("regime_11_mean", 2.0 + p[3] + p[0] + p[1] * l1 + p[2]);
    g.truth.oracle.emplace_back("regime_00_mean", 2.0);
  }
  if (scenario.name == "heterogeneous") g.truth.oracle.emplace_back("pooling_limit", scenario.psi[0]);
  return g;
}

OracleMean oracle_regime_mean(const Scenario& scenario, const RegimeSpec& regime, std::size_t n_oracle,
                              std::uint64_t seed) {
  if (scenario.mode == "survival") throw ConfigError("forced-regime oracle is defined for outcome scenarios only");
  if (n_oracle < 2) throw ConfigError("oracle needs at least 2 draws");
  PanelLayout lay = layout_of(scenario);
  const int k = lay.outcome_times.back();
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < n_oracle; ++i) {
    Rng rng(derive_seed(seed, {0x0ac1eULL, i}));
    Drawer draw(scenario, rng, &regime, lay.time_grid);
    double y = draw().rec.y[k];
    sum += y;
    sum2 += y * y;
  }
  OracleMean o;
  o.n = n_oracle;
  o.mean = sum / n_oracle;
  double var = (sum2 - n_oracle * o.mean * o.mean) / (n_oracle - 1.0);
  o.se = std::sqrt(std::max(0.0, var) / n_oracle);
  return o;
}

ScenarioModel scenario_model(const Scenario& s) {
  ScenarioModel m;
  m.psi_names = s.psi_names;
  m.p = static_cast<int>(s.psi.size());
  const std::string& name = s.name;
  if (name == "null" || name == "seq-confounded") {
    m.method = "snmm-identity";
    m.blip = {{2, 1, "A[1]", 0}, {2, 1, "L[1]*A[1]", 1}, {2, 1, "A[0]*A[1]", 2}, {2, 0, "A[0]", 3},
              {2, 0, "L[0]*A[0]", 4}};
    m.propensity = {{"1", "L[0]"}, {"1", "L[1]", "A[0]"}};
    m.outcome = {{"1", "L[0]"}, {"1", "L[0]", "A[0]", "L[1]", "L[0]*A[0]"}};
  } else if (s.K == 0) {
    m.method = "smm-identity";
    m.blip = {{1, 0, "A", 0}};
    m.propensity = {{"1", "L"}};
    m.outcome = {{"1", "L"}};
  } else if (name == "saftm-confounded") {
    m.method = "saftm";
    m.blip = {{0, -1, "A", 0}};
    m.propensity = {{"1", "L[0]"}, {"1", "L[1]"}};
    m.outcome = {{"1", "L"}};
    m.grid_lo = {s.psi[0] - 1.0};
    m.grid_hi = {s.psi[0] + 1.0};
    m.grid_points = {201};
  } else if (name == "noncompliance") {
    m.method = "iv";
    m.blip = {{2, 1, "A[1]", 0}};
    m.propensity = {{"1", "L[0]"}};
    m.propensity_family = "gaussian";
    m.outcome = {{"1", "L[0]"}};
  } else if (name == "mediation") {
    m.method = "cde";
    m.blip = {{2, 0, "A[0]", 0}, {2, 0, "A[0]*A[1]", 1}};
    m.propensity = {{"1", "L[0]"}};
    m.mediator = {"1", "L[1]", "A[0]"};
    m.outcome = {{"1", "L[0]", "A[1]", "L[0]*A[1]"}};
  }
  return m;
}

}  // namespace gestimate
