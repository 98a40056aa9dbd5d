#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gestimate/gest.hpp"
#include "gestimate/linalg.hpp"
#include "gestimate/nuisance.hpp"
#include "gestimate/panel.hpp"

namespace gestimate::detail {

// score block of an estimated propensity model at one time
struct NuisanceBlock {
  int m = 0;
  std::vector<std::size_t> rows;
  MatrixXd X;
  VectorXd resid;  // A - mu
  VectorXd slope;  // d mu / d eta
};

// one (m, k) conditional-covariance equation
struct Slot {
  int m = 0, k = 0;
  std::vector<std::size_t> rows;
  MatrixXd dtilde;  // d - E(d | history)
  MatrixXd dshift;  // d(1) - d(0)
  int block = -1;
  std::vector<int> block_row;
  VectorXd w;
  std::shared_ptr<const Projector> proj;
};

struct Response {
  std::vector<VectorXd> q;
  std::vector<MatrixXd> dq;  // empty when no derivative was requested
};

using ResponseFn = std::function<Response(const VectorXd& psi, bool derivative)>;

struct Evaluation {
  VectorXd psi;
  Response resp;
  std::vector<VectorXd> resid;  // q minus its working-model projection
  VectorXd score;               // summed over subjects
  MatrixXd jacobian;            // profile derivative of score (when requested)
};

struct SlotPlan {
  int m = 0, k = 0;
  std::vector<std::size_t> rows;
  MatrixXd design;
  VectorXd weight;  // empty: ones
  IndexMap index;   // evaluated on HistoryView(panel, subject, m)
  std::shared_ptr<const Projector> proj;  // optional prebuilt projector for design/weight
};

// propensity blocks and fitted means shared by repeated system builds
struct NuisanceCache {
  std::vector<NuisanceBlock> blocks;
  std::map<int, int> block_of;
  std::vector<std::vector<int>> pos;            // per block: subject -> row
  std::map<int, std::vector<double>> mu;        // per time: subject -> propensity (NaN if not at risk)
  bool bernoulli = true;
};

NuisanceCache make_nuisance(const Panel& panel, const PropensityFit& prop, const std::vector<int>& times,
                            const OffsetFn& tilt = {});

class EstimatingSystem {
 public:
  EstimatingSystem(std::size_t n, int p, std::vector<Slot> slots, std::vector<NuisanceBlock> blocks, ResponseFn fn);

  std::size_t n() const { return n_; }
  int p() const { return p_; }
  const std::vector<Slot>& slots() const { return slots_; }
  const std::vector<NuisanceBlock>& blocks() const { return blocks_; }

  Evaluation evaluate(const VectorXd& psi, bool derivative) const;
  MatrixXd contributions(const Evaluation& ev) const;
  // contributions with the first-order effect of estimated nuisance parameters removed
  MatrixXd adjusted_contributions(const Evaluation& ev) const;
  // T = S' V^{-1} S with V from adjusted contributions; NaN when V is singular
  double statistic(const Evaluation& ev) const;
  StackedScores stacked(const VectorXd& psi) const;
  // true when the treatment entering the equations never varies
  bool degenerate() const;

 private:
  std::size_t n_;
  int p_;
  std::vector<Slot> slots_;
  std::vector<NuisanceBlock> blocks_;
  ResponseFn fn_;
};

// assembles slots and propensity blocks; the tilt offset (if any) shifts the bernoulli log-odds
EstimatingSystem build_system(const Panel& panel, int p, const PropensityFit& prop,
                              const std::vector<SlotPlan>& plans, ResponseFn fn, const OffsetFn& tilt = {});
EstimatingSystem build_system(const Panel& panel, int p, const NuisanceCache& cache,
                              const std::vector<SlotPlan>& plans, ResponseFn fn);

std::vector<int> plan_times(const std::vector<SlotPlan>& plans);

// grid search over psi; eval returns the statistic (NaN if undefined) and an artificial-censoring count
struct GridPoint {
  double statistic = 0.0;
  int artificial = 0;
};
std::pair<EstimateResult, ConfidenceSet> run_grid(int p, const GridSpec& grid,
                                                  const std::function<GridPoint(const VectorXd&)>& eval);

// precomputed identity/log mean-model blip-down for every (m, k) slot
struct SnmmData {
  std::vector<SlotPlan> plans;
  std::vector<MatrixXd> G;  // rows x p cumulative features
  std::vector<VectorXd> y;
};

SnmmData snmm_data(const Panel& panel, const BlipSpec& spec, const OutcomeModel& out, const IndexMap& index);
ResponseFn snmm_response(const SnmmData& data, Link link);

// Newton with step halving, falling back to coordinate secant searches
struct SolveResult {
  VectorXd psi;
  bool converged = false;
  int iterations = 0;
  double norm = 0.0;
  SolveMode mode = SolveMode::root_find;
};

SolveResult solve_linear(const EstimatingSystem& sys);
SolveResult solve_newton(const EstimatingSystem& sys, const VectorXd& start, int max_iter, double tol);

IndexMap default_index(const BlipSpec& spec);
void finish_result(EstimateResult& res, const EstimatingSystem& sys, const SolveResult& sol);

}  // namespace gestimate::detail
