#include "config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "gestimate/error.hpp"

namespace gestimate::cli {

using nlohmann::json;
namespace fs = std::filesystem;

int ModelConfig::p() const {
  int p = 0;
  for (const auto& t : blip) p = std::max(p, t.psi_index + 1);
  return p;
}

namespace {

void allow(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
  std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ConfigError("unknown key '" + (where.empty() ? k : where + "." + k) + "'");
}

template <class T>
T get(const json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("'" + where + "' has the wrong type");
  }
}

template <class T>
void opt(const json& j, const char* key, T& out, const std::string& where) {
  if (j.contains(key)) out = get<T>(j.at(key), where + "." + key);
}

std::vector<std::vector<std::string>> feature_lists(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError("'" + where + "' must be a list of expressions or a list of lists");
  if (!j.empty() && j.front().is_array()) return get<std::vector<std::vector<std::string>>>(j, where);
  return {get<std::vector<std::string>>(j, where)};
}

std::string resolve(const std::string& path, const std::string& base) {
  fs::path p(path);
  return p.is_absolute() ? path : (fs::path(base) / p).lexically_normal().string();
}

PanelSchema parse_schema(const json& j, std::string& path, const std::string& base) {
  PanelSchema s;
  if (j.is_string()) {
    path = resolve(j.get<std::string>(), base);
    return s;
  }
  allow(j, "input", {"path", "subject", "time", "treatment", "outcome", "covariates", "time_grid", "outcome_times",
                     "survival", "event_time", "censor_time", "event_observed", "weight"});
  if (!j.contains("path")) throw ConfigError("'input.path' is required");
  path = resolve(get<std::string>(j.at("path"), "input.path"), base);
  opt(j, "subject", s.subject, "input");
  opt(j, "time", s.time, "input");
  opt(j, "treatment", s.treatment, "input");
  opt(j, "outcome", s.outcome, "input");
  opt(j, "covariates", s.covariates, "input");
  opt(j, "time_grid", s.time_grid, "input");
  opt(j, "outcome_times", s.outcome_times, "input");
  opt(j, "survival", s.survival, "input");
  opt(j, "event_time", s.event_time, "input");
  opt(j, "censor_time", s.censor_time, "input");
  opt(j, "event_observed", s.event_observed, "input");
  if (j.contains("weight")) s.weight = get<std::string>(j.at("weight"), "input.weight");
  return s;
}

ModelConfig parse_model(const json& j) {
  allow(j, "model", {"blip", "psi_names", "propensity", "outcome", "outcome_mean", "mediator", "max_weight"});
  ModelConfig m;
  if (!j.contains("blip") || !j.at("blip").is_array() || j.at("blip").empty())
    throw ConfigError("'model.blip' must be a non-empty list");
  int next = 0;
  for (const auto& t : j.at("blip")) {
    TermText term;
    term.target_k = -1;
    term.psi_index = next;
    if (t.is_string()) {
      term.expression = t.get<std::string>();
    } else {
      allow(t, "model.blip[]", {"expr", "source", "target", "psi"});
      if (!t.contains("expr")) throw ConfigError("'model.blip[].expr' is required");
      term.expression = get<std::string>(t.at("expr"), "model.blip[].expr");
      opt(t, "source", term.source_m, "model.blip[]");
      opt(t, "target", term.target_k, "model.blip[]");
      opt(t, "psi", term.psi_index, "model.blip[]");
      if (term.psi_index < 0) throw ConfigError("'model.blip[].psi' must be nonnegative");
    }
    next = std::max(next, term.psi_index + 1);
    m.blip.push_back(term);
  }
  opt(j, "psi_names", m.psi_names, "model");
  if (!m.psi_names.empty() && static_cast<int>(m.psi_names.size()) != m.p())
    throw ConfigError("'model.psi_names' needs one name per blip parameter");
  if (j.contains("propensity")) {
    const auto& pj = j.at("propensity");
    allow(pj, "model.propensity", {"features", "family"});
    if (pj.contains("features")) m.propensity = feature_lists(pj.at("features"), "model.propensity.features");
    opt(pj, "family", m.propensity_family, "model.propensity");
  }
  if (j.contains("outcome")) {
    const auto& oj = j.at("outcome");
    if (oj.is_string()) {
      if (oj.get<std::string>() != "zero") throw ConfigError("'model.outcome' must be \"zero\" or an object");
      m.outcome_zero = true;
    } else {
      allow(oj, "model.outcome", {"features"});
      if (oj.contains("features")) m.outcome = feature_lists(oj.at("features"), "model.outcome.features");
    }
  }
  if (!m.outcome_zero && m.outcome.empty()) m.outcome_zero = true;
  opt(j, "outcome_mean", m.outcome_mean, "model");
  opt(j, "mediator", m.mediator, "model");
  opt(j, "max_weight", m.max_weight, "model");
  return m;
}

EstimatorConfig parse_estimator(const json& j) {
  allow(j, "estimator", {"method", "grid", "level", "alpha", "gamma", "force_root_finder", "max_iter", "tol",
                         "test_psi", "overlap_epsilon"});
  EstimatorConfig e;
  if (!j.contains("method")) throw ConfigError("'estimator.method' is required");
  e.method = get<std::string>(j.at("method"), "estimator.method");
  if (j.contains("grid")) {
    if (!j.at("grid").is_array()) throw ConfigError("'estimator.grid' must be a list of axes");
    for (const auto& a : j.at("grid")) {
      allow(a, "estimator.grid[]", {"lo", "hi", "points"});
      GridAxis ax;
      opt(a, "lo", ax.lo, "estimator.grid[]");
      opt(a, "hi", ax.hi, "estimator.grid[]");
      opt(a, "points", ax.points, "estimator.grid[]");
      e.grid.push_back(ax);
    }
  }
  opt(j, "level", e.level, "estimator");
  opt(j, "alpha", e.alpha, "estimator");
  opt(j, "gamma", e.gamma, "estimator");
  opt(j, "force_root_finder", e.force_root_finder, "estimator");
  opt(j, "max_iter", e.max_iter, "estimator");
  opt(j, "tol", e.tol, "estimator");
  if (j.contains("test_psi")) e.test_psi = get<std::vector<double>>(j.at("test_psi"), "estimator.test_psi");
  opt(j, "overlap_epsilon", e.overlap_epsilon, "estimator");
  return e;
}

ScenarioConfig parse_scenario(const json& j) {
  allow(j, "scenario", {"name", "n", "reps", "params", "estimators"});
  ScenarioConfig s;
  if (!j.contains("name")) throw ConfigError("'scenario.name' is required");
  s.name = get<std::string>(j.at("name"), "scenario.name");
  opt(j, "n", s.n, "scenario");
  opt(j, "reps", s.reps, "scenario");
  opt(j, "params", s.params, "scenario");
  opt(j, "estimators", s.estimators, "scenario");
  if (s.n < 1) throw ConfigError("'scenario.n' must be positive");
  return s;
}

PredictConfig parse_predict(const json& j) {
  allow(j, "predict", {"regimes", "bootstrap", "inner_features", "target"});
  PredictConfig p;
  if (j.contains("regimes")) {
    if (!j.at("regimes").is_array()) throw ConfigError("'predict.regimes' must be a list");
    for (const auto& r : j.at("regimes")) {
      allow(r, "predict.regimes[]", {"a0", "a1", "label", "no_current_interaction"});
      RegimeConfig rc;
      for (const char* key : {"a0", "a1"})
        if (r.contains(key)) {
          const auto& v = r.at(key);
          std::string& dst = std::string(key) == "a0" ? rc.a0 : rc.a1;
          if (v.is_number()) {
            std::ostringstream os;
            os.precision(17);
            os << v.get<double>();
            dst = os.str();
          } else {
            dst = get<std::string>(v, std::string("predict.regimes[].") + key);
          }
        }
      opt(r, "label", rc.label, "predict.regimes[]");
      opt(r, "no_current_interaction", rc.no_current_interaction, "predict.regimes[]");
      if (rc.label.empty()) rc.label = "(" + rc.a0 + ", " + rc.a1 + ")";
      p.regimes.push_back(rc);
    }
  }
  opt(j, "bootstrap", p.bootstrap, "predict");
  opt(j, "inner_features", p.inner_features, "predict");
  opt(j, "target", p.target, "predict");
  if (p.bootstrap < 0) throw ConfigError("'predict.bootstrap' must be nonnegative");
  return p;
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  allow(j, "", {"command", "seed", "input", "output", "scenario", "model", "estimator", "predict"});
  RunConfig c;
  opt(j, "command", c.command, "");
  if (j.contains("seed")) c.seed = get<std::uint64_t>(j.at("seed"), "seed");
  if (j.contains("input")) {
    std::string path;
    c.schema = parse_schema(j.at("input"), path, base_dir);
    c.input = path;
  }
  if (j.contains("output")) c.output_dir = get<std::string>(j.at("output"), "output");
  c.output_dir = resolve(c.output_dir, base_dir);
  if (j.contains("scenario")) c.scenario = parse_scenario(j.at("scenario"));
  if (j.contains("model")) {
    c.model = parse_model(j.at("model"));
    c.has_model = true;
  }
  if (j.contains("estimator")) c.estimator = parse_estimator(j.at("estimator"));
  if (j.contains("predict")) c.predict = parse_predict(j.at("predict"));
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), fs::path(path).parent_path().string().empty() ? "." : fs::path(path).parent_path().string());
}

}  // namespace gestimate::cli
