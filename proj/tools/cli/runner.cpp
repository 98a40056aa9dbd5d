#include "runner.hpp"

#include <algorithm>

#include "gestimate/compare.hpp"
#include "gestimate/error.hpp"
#include "gestimate/survival.hpp"

namespace gestimate::cli {

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{"smm-identity", "smm-log",  "smm-logit", "snmm-identity", "snmm-log",
                                          "sndm-grid",    "saftm",    "iv",        "cde",           "ipw-msm",
                                          "ipw-plain",    "ols",      "ps-regression"};
  return m;
}

namespace {

std::vector<BlipTerm> make_terms(const Panel& panel, const ModelConfig& model) {
  std::vector<BlipTerm> terms;
  for (const auto& t : model.blip) {
    int k = t.target_k < 0 ? panel.K() + 1 : t.target_k;
    terms.push_back(BlipTerm{k, t.source_m, Expression::parse(t.expression, panel.symbols()), t.psi_index});
  }
  return terms;
}

std::vector<std::string> names_of(const ModelConfig& model) {
  if (!model.psi_names.empty()) return model.psi_names;
  std::vector<std::string> names(model.p());
  for (const auto& t : model.blip)
    if (names[t.psi_index].empty()) names[t.psi_index] = t.expression;
  return names;
}

void require_mode(const Panel& panel, bool survival, const std::string& method) {
  if (panel.survival() != survival)
    throw DataError("method '" + method + "' needs a " + (survival ? "survival-mode" : "mean-mode") +
                    " panel (event_time / censor_time columns " + (survival ? "required" : "not expected") + ")");
}

GridSpec grid_of(const EstimatorConfig& est, int p) {
  if (static_cast<int>(est.grid.size()) != p)
    throw ConfigError("'estimator.grid' needs one axis per parameter (" + std::to_string(p) + ")");
  return GridSpec{est.grid, est.level};
}

}  // namespace

FeatureMap make_features(const Panel& panel, const std::vector<std::vector<std::string>>& lists) {
  return lists.size() == 1 ? FeatureMap::parse(lists[0], panel.symbols())
                           : FeatureMap::parse_per_time(lists, panel.symbols());
}

OutcomeModel make_outcome(const Panel& panel, const ModelConfig& model) {
  if (model.outcome_zero) return OutcomeModel{{}, true};
  return OutcomeModel{make_features(panel, model.outcome), false};
}

PropensityFit make_propensity(const Panel& panel, const ModelConfig& model, const std::vector<int>& times) {
  if (model.propensity.empty()) throw ConfigError("'model.propensity.features' is required for this method");
  return fit_propensity(panel, make_features(panel, model.propensity), parse_family(model.propensity_family), times);
}

BlipSpec make_blip(const Panel& panel, const ModelConfig& model, Link link) {
  return BlipSpec(link, make_terms(panel, model), model.p(), names_of(model));
}

FitOutput run_fit(const Panel& panel, const ModelConfig& model, const EstimatorConfig& est) {
  const std::string& method = est.method;
  if (std::find(known_methods().begin(), known_methods().end(), method) == known_methods().end())
    throw ConfigError("unknown method '" + method + "'");
  FitOutput out;
  GestOptions go;
  go.force_root_finder = est.force_root_finder;
  go.max_iter = est.max_iter;
  go.tol = est.tol;

  if (method == "saftm") {
    require_mode(panel, true, method);
    std::vector<SaftmTerm> terms;
    for (const auto& t : model.blip)
      terms.push_back(SaftmTerm{t.source_m, Expression::parse(t.expression, panel.symbols()), t.psi_index});
    SaftmSpec spec(terms, model.p(), names_of(model));
    auto prop = make_propensity(panel, model);
    SaftmOptions so;
    so.alpha = est.alpha;
    auto [res, set] = gest_saftm(panel, spec, prop, make_outcome(panel, model), grid_of(est, spec.p()), so);
    out.result = std::move(res);
    out.set = std::move(set);
    out.overlap = summarize_overlap(panel, prop, est.overlap_epsilon);
    return out;
  }
  require_mode(panel, false, method);

  if (method == "sndm-grid") {
    SndmSpec spec(make_terms(panel, model), model.p(), names_of(model));
    auto prop = make_propensity(panel, model);
    auto [res, set] = gest_grid(panel, spec, prop, make_outcome(panel, model), grid_of(est, spec.p()));
    out.result = std::move(res);
    out.set = std::move(set);
    return out;
  }
  if (method == "iv") {
    auto inst = make_propensity(panel, model, {0});
    out.result = gest_iv(panel, make_blip(panel, model, Link::identity), inst, make_outcome(panel, model));
    return out;
  }
  if (method == "cde") {
    if (model.mediator.empty()) throw ConfigError("'model.mediator' is required for method 'cde'");
    CdeSpec cde;
    for (const auto& t : model.blip) cde.features.push_back(Expression::parse(t.expression, panel.symbols()));
    cde.psi_names = names_of(model);
    if (model.outcome_zero) throw ConfigError("'model.outcome.features' is required for method 'cde'");
    cde.outcome = make_features(panel, model.outcome);
    cde.max_weight = model.max_weight;
    auto pa = make_propensity(panel, model, {0});
    auto pm = fit_propensity(panel, FeatureMap::parse(model.mediator, panel.symbols()), Family::bernoulli_logit, {1});
    out.result = fit_cde(panel, cde, pa, pm);
    return out;
  }
  if (method == "ipw-msm" || method == "ipw-plain" || method == "ols" || method == "ps-regression") {
    if (method == "ols") {
      if (model.outcome_zero) throw ConfigError("'model.outcome.features' is required for method 'ols'");
      out.result = fit_ols(panel, make_features(panel, model.outcome));
      return out;
    }
    auto prop = make_propensity(panel, model);
    out.overlap = summarize_overlap(panel, prop, est.overlap_epsilon);
    if (method == "ps-regression") {
      out.result = fit_ps_regression(panel, prop);
    } else {
      ArmMean arms;
      if (method == "ipw-msm" && !model.outcome_zero) arms = fit_arm_means(panel, make_features(panel, model.outcome));
      auto r = fit_ipw_msm(panel, prop, arms);
      out.result = method == "ipw-msm" ? r.augmented : r.plain;
    }
    return out;
  }

  // G-estimation of mean models
  const bool nested = method.rfind("snmm", 0) == 0;
  const std::string link_text = method.substr(method.find('-') + 1);
  Link link = parse_link(link_text);
  BlipSpec spec = make_blip(panel, model, link);
  auto prop = make_propensity(panel, model);
  auto outcome = make_outcome(panel, model);
  if (prop.family() == Family::bernoulli_logit) out.overlap = summarize_overlap(panel, prop, est.overlap_epsilon);
  if (link == Link::logit) {
    if (model.outcome_mean.empty()) throw ConfigError("'model.outcome_mean' is required for method 'smm-logit'");
    auto mean = fit_outcome_mean(panel, FeatureMap::parse(model.outcome_mean, panel.symbols()));
    out.result = gest_logistic_smm(panel, spec, prop, mean, outcome, go);
  } else {
    out.result = nested ? gest_snmm(panel, spec, prop, outcome, go) : gest_smm(panel, spec, prop, outcome, go);
  }
  if (est.test_psi) {
    if (static_cast<int>(est.test_psi->size()) != spec.p())
      throw ConfigError("'estimator.test_psi' needs " + std::to_string(spec.p()) + " values");
    Eigen::VectorXd psi0 = Eigen::Map<const Eigen::VectorXd>(est.test_psi->data(), spec.p());
    out.test = score_test(panel, spec, prop, outcome, psi0, go);
  }
  return out;
}

ModelConfig scenario_model_config(const Scenario& scenario) {
  ScenarioModel sm = scenario_model(scenario);
  ModelConfig m;
  m.blip = sm.blip;
  m.psi_names = sm.psi_names;
  m.propensity = sm.propensity;
  m.propensity_family = sm.propensity_family;
  m.outcome = sm.outcome;
  m.outcome_zero = sm.outcome.empty();
  m.mediator = sm.mediator;
  return m;
}

EstimatorConfig scenario_estimator_config(const Scenario& scenario) {
  ScenarioModel sm = scenario_model(scenario);
  EstimatorConfig e;
  e.method = sm.method;
  for (std::size_t j = 0; j < sm.grid_lo.size(); ++j) e.grid.push_back(GridAxis{sm.grid_lo[j], sm.grid_hi[j], sm.grid_points[j]});
  return e;
}

std::vector<EstimatorSpec> benchmark_estimators(const Scenario& scenario, const std::vector<std::string>& names) {
  const ModelConfig base = scenario_model_config(scenario);
  const EstimatorConfig base_est = scenario_estimator_config(scenario);
  std::vector<EstimatorSpec> out;
  for (const auto& name : names) {
    ModelConfig m = base;
    EstimatorConfig e = base_est;
    if (name == "matched") {
    } else if (name == "a-wrong" || name == "b-wrong" || name == "both-wrong") {
      // misspecified working models drop every covariate
      if (name != "b-wrong") m.propensity = {{"1"}};
      if (name != "a-wrong") m.outcome = {{"1"}}, m.outcome_zero = false;
    } else if (name == "sensitivity") {
      // G-estimation under the scenario's own tilt; consistent in hidden-bias
      const double gamma = scenario.param("gamma");
      EstimatorSpec spec;
      spec.name = name;
      spec.run = [m, e, gamma](const Generated& g) {
        Link link = parse_link(e.method.substr(e.method.find('-') + 1));
        SensitivitySpec sens;
        sens.gamma = {gamma};
        auto pts = gest_sensitivity(g.panel, make_blip(g.panel, m, link), make_propensity(g.panel, m), sens,
                                    make_outcome(g.panel, m));
        if (!pts[0].ok) throw NumericalError(pts[0].error);
        return pts[0].result;
      };
      out.push_back(std::move(spec));
      continue;
    } else if (name == "ipw-msm" || name == "ipw-plain" || name == "ols" || name == "ps-regression") {
      if (scenario.K != 0) throw ConfigError("estimator '" + name + "' needs a point-treatment scenario");
      e.method = name;
    } else {
      throw ConfigError("unknown benchmark estimator '" + name + "'");
    }
    EstimatorSpec spec;
    spec.name = name;
    spec.run = [m, e](const Generated& g) { return run_fit(g.panel, m, e).result; };
    out.push_back(std::move(spec));
  }
  return out;
}

RegimeSpec make_regime(const Panel& panel, const RegimeConfig& rc) {
  RegimeSpec r;
  r.a0 = Expression::parse(rc.a0, panel.symbols());
  r.a1 = Expression::parse(rc.a1, panel.symbols());
  r.label = rc.label;
  r.no_current_interaction = rc.no_current_interaction;
  return r;
}

}  // namespace gestimate::cli
