#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gestimate/blip.hpp"
#include "gestimate/nuisance.hpp"
#include "gestimate/panel.hpp"

namespace gestimate {

enum class SolveMode { closed_form, root_find, grid };
const char* mode_name(SolveMode mode);

struct EstimateResult {
  std::string method;
  Eigen::VectorXd psi;
  Eigen::MatrixXd cov;
  bool converged = false;
  int n_iter = 0;
  double equation_norm = 0.0;
  SolveMode mode = SolveMode::closed_form;
  std::vector<std::string> psi_names;
  std::vector<std::string> warnings;
  std::vector<std::string> notes;
  std::vector<std::pair<std::string, double>> metrics;

  Eigen::VectorXd se() const;
  void metric(const std::string& key, double value) { metrics.emplace_back(key, value); }
};

struct ConfidenceSet {
  std::vector<Eigen::VectorXd> grid;
  std::vector<double> statistic;  // NaN where undefined
  std::vector<int> artificial_censoring;  // survival only
  double level = 0.95;
  double threshold = 0.0;
  std::vector<std::size_t> accepted;
};

// d(L̄_m, Ā_m) for the (m, k) equation; reads A_m from h
using IndexMap = std::function<Eigen::VectorXd(const HistoryView& h, int m, int k)>;

struct GestOptions {
  IndexMap index;                       // default: blip features
  bool force_root_finder = false;
  std::optional<Eigen::VectorXd> start;  // root-finder starting point, default 0
  int max_iter = 100;
  double tol = 1e-8;
};

// stacked M-estimation: columns of contributions are (nuisance parameters..., psi)
struct StackedScores {
  Eigen::MatrixXd contributions;
  Eigen::MatrixXd jacobian;  // derivative of the summed estimating functions; empty -> finite differences
  std::function<Eigen::MatrixXd(const Eigen::VectorXd& theta)> evaluate;
  Eigen::VectorXd theta;
  int psi_offset = 0;
  int psi_dim = 0;
};

Eigen::MatrixXd sandwich_cov(const StackedScores& scores);

EstimateResult gest_smm(const Panel& panel, const BlipSpec& spec, const PropensityFit& prop, const OutcomeModel& out,
                        const GestOptions& options = {});
EstimateResult gest_snmm(const Panel& panel, const BlipSpec& spec, const PropensityFit& prop,
                         const OutcomeModel& out, const GestOptions& options = {});

struct ScoreTest {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
};

// nuisance-adjusted score test of psi = psi0 for the mean model
ScoreTest score_test(const Panel& panel, const BlipSpec& spec, const PropensityFit& prop, const OutcomeModel& out,
                     const Eigen::VectorXd& psi0, const GestOptions& options = {});

struct GridAxis {
  double lo = -1.0;
  double hi = 1.0;
  int points = 21;
};

struct GridSpec {
  std::vector<GridAxis> axes;
  double level = 0.95;
};

std::pair<EstimateResult, ConfidenceSet> gest_grid(const Panel& panel, const SndmSpec& spec,
                                                   const PropensityFit& prop, const OutcomeModel& out,
                                                   const GridSpec& grid, const IndexMap& index = {});

EstimateResult gest_iv(const Panel& panel, const BlipSpec& spec, const PropensityFit& instrument,
                       const OutcomeModel& out);

struct SensitivitySpec {
  // q(u, history, a); empty means the built-in gamma * u * a
  SensitivityFunction q;
  std::vector<double> gamma;
  int max_sweeps = 50;
  double tol = 1e-8;
};

struct SensitivityPoint {
  double gamma = 0.0;
  EstimateResult result;
  bool ok = true;
  std::string error;
};

std::vector<SensitivityPoint> gest_sensitivity(const Panel& panel, const BlipSpec& spec, const PropensityFit& prop,
                                               const SensitivitySpec& sens, const OutcomeModel& out);

EstimateResult gest_logistic_smm(const Panel& panel, const BlipSpec& spec, const PropensityFit& prop,
                                 const MeanPredictor& outcome_mean, const OutcomeModel& out,
                                 const GestOptions& options = {});

}  // namespace gestimate
