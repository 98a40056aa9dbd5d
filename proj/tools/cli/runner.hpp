#pragma once

#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "gestimate/effects.hpp"
#include "gestimate/gest.hpp"
#include "gestimate/panel.hpp"
#include "gestimate/sim.hpp"

namespace gestimate::cli {

struct FitOutput {
  EstimateResult result;
  std::optional<ConfidenceSet> set;
  std::optional<ScoreTest> test;
  std::optional<OverlapReport> overlap;
};

const std::vector<std::string>& known_methods();

BlipSpec make_blip(const Panel& panel, const ModelConfig& model, Link link);
FeatureMap make_features(const Panel& panel, const std::vector<std::vector<std::string>>& lists);

OutcomeModel make_outcome(const Panel& panel, const ModelConfig& model);
// times empty: every time 0..K
PropensityFit make_propensity(const Panel& panel, const ModelConfig& model, const std::vector<int>& times = {});

FitOutput run_fit(const Panel& panel, const ModelConfig& model, const EstimatorConfig& est);

// correctly specified analysis of a scenario expressed as config sections
ModelConfig scenario_model_config(const Scenario& scenario);
EstimatorConfig scenario_estimator_config(const Scenario& scenario);

// "matched", "a-wrong", "b-wrong", "both-wrong", "ipw-msm", "ipw-plain", "ols", "ps-regression",
// "sensitivity" (G-estimation at the scenario tilt gamma)
std::vector<EstimatorSpec> benchmark_estimators(const Scenario& scenario, const std::vector<std::string>& names);

RegimeSpec make_regime(const Panel& panel, const RegimeConfig& rc);

}  // namespace gestimate::cli
