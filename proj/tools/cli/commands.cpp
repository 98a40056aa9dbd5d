#include "commands.hpp"

#include <filesystem>
#include <iostream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "config.hpp"
#include "gestimate/compare.hpp"
#include "gestimate/effects.hpp"
#include "gestimate/error.hpp"
#include "gestimate/sim.hpp"
#include "report.hpp"
#include "runner.hpp"

namespace gestimate::cli {

namespace fs = std::filesystem;

namespace {

struct Context {
  RunConfig cfg;
  int jobs = 1;
  std::string dir;
  std::string path(const std::string& name) const { return (fs::path(dir) / name).string(); }
};

Panel input_panel(const Context& cx) {
  if (!cx.cfg.input) throw ConfigError("'input' is required for this command");
  spdlog::info("loading panel {}", *cx.cfg.input);
  Panel p = load_panel(*cx.cfg.input, cx.cfg.schema);
  spdlog::info("panel: {} subjects, K = {}", p.n(), p.K());
  return p;
}

void require_model(const Context& cx) {
  if (!cx.cfg.has_model) throw ConfigError("'model' section is required for this command");
  if (cx.cfg.estimator.method.empty()) throw ConfigError("'estimator.method' is required for this command");
}

const ScenarioConfig& require_scenario(const Context& cx) {
  if (!cx.cfg.scenario) throw ConfigError("'scenario' section is required for this command");
  return *cx.cfg.scenario;
}

ordered_json model_json(const ModelConfig& m) {
  ordered_json j;
  ordered_json blip = ordered_json::array();
  for (const auto& t : m.blip) {
    ordered_json tj{{"expr", t.expression}, {"source", t.source_m}};
    if (t.target_k >= 0) tj["target"] = t.target_k;
    tj["psi"] = t.psi_index;
    blip.push_back(tj);
  }
  j["blip"] = blip;
  j["psi_names"] = m.psi_names;
  j["propensity"] = ordered_json{{"features", m.propensity}, {"family", m.propensity_family}};
  if (m.outcome_zero)
    j["outcome"] = "zero";
  else
    j["outcome"] = ordered_json{{"features", m.outcome}};
  if (!m.mediator.empty()) j["mediator"] = m.mediator;
  return j;
}

ordered_json estimator_json(const EstimatorConfig& e) {
  ordered_json j{{"method", e.method}};
  if (!e.grid.empty()) {
    ordered_json g = ordered_json::array();
    for (const auto& a : e.grid) g.push_back(ordered_json{{"lo", a.lo}, {"hi", a.hi}, {"points", a.points}});
    j["grid"] = g;
  }
  return j;
}

int cmd_fit(const Context& cx) {
  require_model(cx);
  Panel panel = input_panel(cx);
  spdlog::info("fitting method {}", cx.cfg.estimator.method);
  FitOutput f = run_fit(panel, cx.cfg.model, cx.cfg.estimator);
  for (const auto& w : f.result.warnings) spdlog::warn("{}", w);
  const double level = cx.cfg.estimator.level;
  ordered_json rep;
  rep["command"] = "fit";
  rep["n"] = panel.n();
  rep["K"] = panel.K();
  rep["result"] = result_json(f.result, level);
  if (f.set) rep["confidence_set"] = set_json(*f.set);
  if (f.test)
    rep["score_test"] = ordered_json{{"statistic", f.test->statistic}, {"df", f.test->df}, {"p_value", f.test->p_value}};
  if (f.overlap) {
    rep["overlap"] = overlap_json(*f.overlap);
    if (f.overlap->any_flagged()) spdlog::warn("some fitted propensities are within epsilon of 0 or 1");
  }
  write_file(cx.path("report.json"), dump(rep));
  write_file(cx.path("estimates.csv"), estimates_csv(f.result, level));
  if (f.set) write_file(cx.path("grid.csv"), set_csv(*f.set, f.result.psi_names));
  spdlog::info("wrote {}", cx.path("report.json"));
  return 0;
}

int cmd_simulate(const Context& cx) {
  const auto& sc = require_scenario(cx);
  Scenario s = make_scenario(sc.name, sc.params);
  spdlog::info("simulating {} with n = {}, seed = {}", s.name, sc.n, cx.cfg.seed);
  Generated g = generate(s, sc.n, cx.cfg.seed);
  write_panel(cx.path("panel.csv"), g.panel);

  ordered_json truth;
  truth["scenario"] = s.name;
  truth["mode"] = s.mode;
  truth["n"] = sc.n;
  truth["seed"] = cx.cfg.seed;
  truth["K"] = s.K;
  truth["psi_names"] = g.truth.psi_names;
  truth["psi"] = vec_json(g.truth.psi);
  truth["rank_preserving"] = s.rank_preserving;
  ordered_json params = ordered_json::object();
  for (const auto& [k, v] : s.params) params[k] = v;
  truth["params"] = params;
  ordered_json oracle = ordered_json::object();
  for (const auto& [k, v] : g.truth.oracle) oracle[k] = v;
  truth["oracle"] = oracle;
  truth["baseline_file"] = "baseline.csv";
  write_file(cx.path("truth.json"), dump(truth));

  std::ostringstream base;
  base << "subject_id";
  const std::size_t width = g.truth.baseline.empty() ? 0 : g.truth.baseline.front().size();
  for (std::size_t j = 0; j < width; ++j) base << ",u0_" << j;
  base << '\n';
  for (std::size_t i = 0; i < g.truth.baseline.size(); ++i) {
    base << g.panel.subject(i).id;
    for (double v : g.truth.baseline[i]) base << ',' << num(v);
    base << '\n';
  }
  write_file(cx.path("baseline.csv"), base.str());

  // a ready-to-run analysis config with the correctly specified models
  ordered_json analysis;
  analysis["command"] = "fit";
  ordered_json input{{"path", "panel.csv"}};
  if (g.panel.survival()) input["survival"] = true;
  if (s.name == "noncompliance" || s.name == "mediation") input["outcome_times"] = std::vector<int>{2};
  analysis["input"] = input;
  analysis["output"] = "fit";
  analysis["model"] = model_json(scenario_model_config(s));
  analysis["estimator"] = estimator_json(scenario_estimator_config(s));
  write_file(cx.path("analysis.json"), dump(analysis));
  spdlog::info("wrote {}", cx.path("panel.csv"));
  return 0;
}

int cmd_benchmark(const Context& cx) {
  const auto& sc = require_scenario(cx);
  Scenario s = make_scenario(sc.name, sc.params);
  auto estimators = benchmark_estimators(s, sc.estimators);
  spdlog::info("benchmark {}: n = {}, reps = {}, jobs = {}", s.name, sc.n, sc.reps, cx.jobs);
  MCSummary mc = monte_carlo(s, estimators, sc.n, sc.reps, cx.cfg.seed, cx.jobs);

  ordered_json rep;
  rep["command"] = "benchmark";
  rep["summary"] = mc_json(mc);

  // empirical variances of the first parameter against the closed-form variances where the law is discrete
  std::ostringstream var;
  var << "estimator,empirical_var,analytic_var,empirical_ratio_to_matched,analytic_ratio_to_matched\n";
  auto law = scenario_law(s);
  std::optional<VarianceReport> vr;
  if (law) vr = analytic_variances(law->law, law->sigma2, {}, law->effects);
  const double n = static_cast<double>(sc.n);
  double emp_ref = std::numeric_limits<double>::quiet_NaN(), ana_ref = emp_ref;
  for (const auto& r : mc.rows)
    if (r.estimator == "matched" && r.parameter == mc.rows.front().parameter) {
      emp_ref = r.sd * r.sd;
      if (vr && law->homogeneous) ana_ref = vr->var_gest / n;
    }
  ordered_json vtab = ordered_json::array();
  for (const auto& spec : estimators) {
    const MCRow& r = mc.row(spec.name, 0);
    double emp = r.sd * r.sd, ana = std::numeric_limits<double>::quiet_NaN();
    if (vr && law->homogeneous) {
      if (spec.name == "matched") ana = vr->var_gest / n;
      if (spec.name == "ipw-msm") ana = vr->var_ipw / n;
    }
    var << spec.name << ',' << num(emp) << ',' << num(ana) << ',' << num(emp / emp_ref) << ',' << num(ana / ana_ref)
        << '\n';
    vtab.push_back(ordered_json{{"estimator", spec.name},
                                {"empirical_var", emp},
                                {"analytic_var", ana},
                                {"empirical_ratio_to_matched", emp / emp_ref},
                                {"analytic_ratio_to_matched", ana / ana_ref}});
  }
  rep["variance"] = vtab;
  if (vr) {
    rep["analytic"] = ordered_json{{"var_gest", vr->var_gest},       {"var_ipw", vr->var_ipw},
                                   {"ratio_ipw_to_gest", vr->var_ipw / vr->var_gest},
                                   {"pooling_limit", vr->pooling_limit}, {"sigma2", vr->sigma2}};
  }
  write_file(cx.path("report.json"), dump(rep));
  write_file(cx.path("mc_summary.csv"), mc_csv(mc));
  write_file(cx.path("variance.csv"), var.str());
  spdlog::info("wrote {}", cx.path("mc_summary.csv"));
  return 0;
}

int cmd_sensitivity(const Context& cx) {
  require_model(cx);
  const auto& est = cx.cfg.estimator;
  const std::string& method = est.method;
  if (method != "smm-identity" && method != "smm-log" && method != "snmm-identity" && method != "snmm-log")
    throw ConfigError("sensitivity analysis supports methods smm-identity, smm-log, snmm-identity and snmm-log");
  Panel panel = input_panel(cx);
  Link link = parse_link(method.substr(method.find('-') + 1));
  BlipSpec spec = make_blip(panel, cx.cfg.model, link);
  auto prop = make_propensity(panel, cx.cfg.model);
  SensitivitySpec sens;
  sens.gamma = est.gamma;
  auto points = gest_sensitivity(panel, spec, prop, sens, make_outcome(panel, cx.cfg.model));

  std::ostringstream csv;
  csv << "gamma,parameter,estimate,se,ok,error\n";
  ordered_json arr = ordered_json::array();
  int failed = 0;
  for (const auto& pt : points) {
    ordered_json pj{{"gamma", pt.gamma}, {"ok", pt.ok}};
    if (pt.ok) {
      pj["result"] = result_json(pt.result, est.level);
      Eigen::VectorXd se = pt.result.se();
      for (Eigen::Index j = 0; j < pt.result.psi.size(); ++j)
        csv << num(pt.gamma) << ',' << pt.result.psi_names[j] << ',' << num(pt.result.psi[j]) << ',' << num(se[j])
            << ",1,\n";
    } else {
      ++failed;
      pj["error"] = pt.error;
      spdlog::warn("gamma = {}: {}", pt.gamma, pt.error);
      std::string msg = pt.error;
      for (char& c : msg)
        if (c == ',' || c == '\n') c = ';';
      csv << num(pt.gamma) << ",,,,0," << msg << '\n';
    }
    arr.push_back(pj);
  }
  ordered_json rep{{"command", "sensitivity"}, {"n", panel.n()}, {"points", arr}};
  write_file(cx.path("report.json"), dump(rep));
  write_file(cx.path("sensitivity.csv"), csv.str());
  if (failed == static_cast<int>(points.size())) throw NumericalError("sensitivity analysis failed at every gamma");
  return 0;
}

int cmd_predict(const Context& cx) {
  require_model(cx);
  const auto& est = cx.cfg.estimator;
  if (est.method != "snmm-identity") throw ConfigError("regime prediction needs method snmm-identity");
  if (cx.cfg.predict.regimes.empty()) throw ConfigError("'predict.regimes' must list at least one regime");
  Panel panel = input_panel(cx);
  const auto& model = cx.cfg.model;
  FitOutput f = run_fit(panel, model, est);
  BlipSpec spec = make_blip(panel, model, Link::identity);
  Refit refit = [&model, &est](const Panel& bp) { return run_fit(bp, model, est).result.psi; };
  PredictOptions po;
  po.bootstrap = cx.cfg.predict.bootstrap;
  po.seed = cx.cfg.seed;
  po.jobs = cx.jobs;
  po.target = cx.cfg.predict.target;
  if (!cx.cfg.predict.inner_features.empty())
    po.inner_features = FeatureMap::parse(cx.cfg.predict.inner_features, panel.symbols());

  std::ostringstream csv;
  csv << "regime,mean,se,bootstrap,bootstrap_failures\n";
  ordered_json arr = ordered_json::array();
  for (const auto& rc : cx.cfg.predict.regimes) {
    RegimeSpec regime = make_regime(panel, rc);
    spdlog::info("predicting regime {}", regime.label);
    RegimePrediction pr = predict_regime_mean(panel, spec, f.result, regime, refit, po);
    csv << '"' << pr.label << "\"," << num(pr.mean) << ',' << num(pr.se) << ',' << pr.bootstrap << ','
        << pr.bootstrap_failures << '\n';
    arr.push_back(ordered_json{{"regime", pr.label},
                               {"a0", rc.a0},
                               {"a1", rc.a1},
                               {"mean", pr.mean},
                               {"se", pr.se},
                               {"bootstrap", pr.bootstrap},
                               {"bootstrap_failures", pr.bootstrap_failures},
                               {"no_current_interaction", pr.no_current_interaction},
                               {"notes", pr.notes}});
  }
  ordered_json rep{{"command", "predict"}, {"n", panel.n()}, {"fit", result_json(f.result, est.level)}, {"predictions", arr}};
  write_file(cx.path("report.json"), dump(rep));
  write_file(cx.path("predictions.csv"), csv.str());
  return 0;
}

void report_error(const std::string& dir, const std::string& kind, const std::string& message, int code) {
  ordered_json e{{"error", ordered_json{{"type", kind}, {"message", message}, {"exit_code", code}}}};
  std::string text = dump(e);
  std::cerr << text;
  if (!dir.empty()) {
    std::error_code ec;
    if (fs::is_directory(dir, ec)) {
      try {
        write_file((fs::path(dir) / "error.json").string(), text);
      } catch (const Error&) {
      }
    }
  }
}

}  // namespace

int run_command(const std::string& command, const std::string& config_path, const CommandOptions& options) {
  Context cx;
  // an unreadable config still leaves its error record in an explicitly requested directory
  auto error_dir = [&] {
    if (!cx.dir.empty() || !options.output_dir) return cx.dir;
    std::error_code ec;
    fs::create_directories(*options.output_dir, ec);
    return *options.output_dir;
  };
  try {
    cx.cfg = load_config(config_path);
    if (!cx.cfg.command.empty() && cx.cfg.command != command)
      throw ConfigError("config is for command '" + cx.cfg.command + "', not '" + command + "'");
    if (options.seed) cx.cfg.seed = *options.seed;
    if (options.output_dir) cx.cfg.output_dir = *options.output_dir;
    if (options.jobs < 1) throw ConfigError("--jobs must be at least 1");
    cx.jobs = options.jobs;
    cx.dir = cx.cfg.output_dir;
    std::error_code ec;
    fs::create_directories(cx.dir, ec);
    if (ec) throw DataError("cannot create output directory '" + cx.dir + "': " + ec.message());
    fs::remove(fs::path(cx.dir) / "error.json", ec);

    if (command == "fit") return cmd_fit(cx);
    if (command == "simulate") return cmd_simulate(cx);
    if (command == "benchmark") return cmd_benchmark(cx);
    if (command == "sensitivity") return cmd_sensitivity(cx);
    if (command == "predict") return cmd_predict(cx);
    throw ConfigError("unknown command '" + command + "'");
  } catch (const ConfigError& e) {
    report_error(error_dir(), "config", e.what(), 2);
    return 2;
  } catch (const DataError& e) {
    report_error(error_dir(), "data", e.what(), 2);
    return 2;
  } catch (const NumericalError& e) {
    report_error(error_dir(), "numerical", e.what(), 1);
    return 1;
  } catch (const std::exception& e) {
    report_error(error_dir(), "internal", e.what(), 1);
    return 1;
  }
}

}  // namespace gestimate::cli
