#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gestimate/gest.hpp"
#include "gestimate/panel.hpp"
#include "gestimate/sim.hpp"

namespace gestimate::cli {

struct ModelConfig {
  std::vector<TermText> blip;  // target_k < 0 means the last time K+1
  std::vector<std::string> psi_names;
  std::vector<std::vector<std::string>> propensity;
  std::string propensity_family = "bernoulli";
  std::vector<std::vector<std::string>> outcome;
  bool outcome_zero = false;
  std::vector<std::string> outcome_mean;  // logistic SMM
  std::vector<std::string> mediator;      // direct effects
  double max_weight = 1e4;

  int p() const;
};

struct EstimatorConfig {
  std::string method;
  std::vector<GridAxis> grid;
  double level = 0.95;
  double alpha = 0.05;
  std::vector<double> gamma{0.0};
  bool force_root_finder = false;
  int max_iter = 100;
  double tol = 1e-8;
  std::optional<std::vector<double>> test_psi;  // score test of psi = test_psi
  double overlap_epsilon = 0.01;
};

struct ScenarioConfig {
  std::string name;
  std::size_t n = 2000;
  int reps = 200;
  std::map<std::string, double> params;
  std::vector<std::string> estimators{"matched"};
};

struct RegimeConfig {
  std::string a0 = "0";
  std::string a1 = "0";
  std::string label;
  bool no_current_interaction = true;
};

struct PredictConfig {
  std::vector<RegimeConfig> regimes;
  int bootstrap = 200;
  std::vector<std::string> inner_features;
  int target = -1;
};

struct RunConfig {
  std::string command;
  std::optional<std::string> input;
  PanelSchema schema;
  std::string output_dir = "out";
  std::optional<ScenarioConfig> scenario;
  ModelConfig model;
  bool has_model = false;
  EstimatorConfig estimator;
  PredictConfig predict;
  std::uint64_t seed = 1;
};

// relative paths in the file resolve against its directory; unknown keys throw ConfigError
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text, const std::string& base_dir = ".");

}  // namespace gestimate::cli
