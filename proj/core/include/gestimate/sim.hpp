#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gestimate/compare.hpp"
#include "gestimate/effects.hpp"
#include "gestimate/gest.hpp"
#include "gestimate/panel.hpp"

namespace gestimate {

struct Scenario {
  std::string name;
  std::string mode;  // mean, distribution, survival, iv, mediation, hidden-bias, near-positivity, heterogeneous
  int K = 0;
  Eigen::VectorXd psi;  // psi*
  std::vector<std::string> psi_names;
  std::map<std::string, double> params;  // generator coefficients, overridable
  bool rank_preserving = true;

  double param(const std::string& key) const;
};

std::vector<std::string> scenario_names();
// throws ConfigError on an unknown name; overrides replace entries of params (and "psi<j>" entries of psi)
Scenario make_scenario(const std::string& name, const std::map<std::string, double>& overrides = {});

struct Truth {
  std::string scenario;
  Eigen::VectorXd psi;
  std::vector<std::string> psi_names;
  // per subject U_0(psi*): treatment-free outcomes (or event time) drawn before blipping up
  std::vector<std::vector<double>> baseline;
  std::vector<std::pair<std::string, double>> oracle;
};

struct Generated {
  Panel panel;
  Truth truth;
};

Generated generate(const Scenario& scenario, std::size_t n, std::uint64_t seed);

struct OracleMean {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

// mean final outcome with treatments forced by the regime
OracleMean oracle_regime_mean(const Scenario& scenario, const RegimeSpec& regime, std::size_t n_oracle,
                              std::uint64_t seed);

// law of (L, A) and stratum effects for scenarios with a discrete covariate
struct ScenarioLaw {
  DiscreteLaw law;
  double sigma2 = 1.0;          // Var(Y_0 | L)
  std::vector<double> effects;  // treatment effect in each stratum
  bool homogeneous = true;
};
std::optional<ScenarioLaw> scenario_law(const Scenario& scenario);

// correctly specified analysis pieces of a scenario, as config-style expression lists
struct TermText {
  int target_k = 1;
  int source_m = 0;  // -1: every interval (failure-time blips)
  std::string expression;
  int psi_index = 0;
};

struct ScenarioModel {
  std::string method;  // snmm-identity, saftm, iv, cde, ...
  std::vector<TermText> blip;
  int p = 0;
  std::vector<std::string> psi_names;
  std::vector<std::vector<std::string>> propensity;  // per time; a single list applies to every time
  std::string propensity_family = "bernoulli";
  std::vector<std::vector<std::string>> outcome;
  std::vector<std::string> mediator;  // direct-effect scenarios: features of the A_1 model
  std::vector<double> grid_lo, grid_hi;
  std::vector<int> grid_points;
};
ScenarioModel scenario_model(const Scenario& scenario);

struct EstimatorSpec {
  std::string name;
  std::function<EstimateResult(const Generated&)> run;
  Eigen::VectorXd truth;  // empty: the scenario's psi*
};

struct MCRow {
  std::string estimator;
  std::string parameter;
  double truth = 0.0;
  double mean = 0.0;
  double bias = 0.0;
  double sd = 0.0;
  double se_mc = 0.0;
  double mean_se = 0.0;
  double coverage = 0.0;
  double rejection = 0.0;  // Wald test of parameter = 0 at 5%
  int reps = 0;
  int failures = 0;
};

struct MCSummary {
  std::string scenario;
  std::size_t n = 0;
  int reps = 0;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> rep_seeds;
  std::vector<MCRow> rows;
  // estimates[e][r] is estimator e at replication r (empty when it failed)
  std::vector<std::vector<Eigen::VectorXd>> estimates;
  std::vector<std::vector<Eigen::VectorXd>> std_errors;
  std::vector<std::vector<std::string>> errors;

  const MCRow& row(const std::string& estimator, std::size_t j = 0) const;
};

MCSummary monte_carlo(const Scenario& scenario, const std::vector<EstimatorSpec>& estimators, std::size_t n, int reps,
                      std::uint64_t seed, int jobs = 1);

}  // namespace gestimate
