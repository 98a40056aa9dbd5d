#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gestimate/blip.hpp"
#include "gestimate/expr.hpp"
#include "gestimate/gest.hpp"
#include "gestimate/nuisance.hpp"
#include "gestimate/panel.hpp"

namespace gestimate {

// a_0 = g_0(L_0) and a_1 = g_1(A_0, L̄_1); constants give a static regime
struct RegimeSpec {
  Expression a0;
  Expression a1;
  std::string label;
  // caller asserts no current-treatment interaction (r_0 = r_1 = 0)
  bool no_current_interaction = true;

  static RegimeSpec fixed(double a0, double a1);
  bool is_static() const { return a0.is_constant() && a1.is_constant(); }
};

struct PredictOptions {
  FeatureMap inner_features;  // regression of gamma_1 on L_0 within A_0 = a_0; empty: (1, L[0]) per covariate
  int bootstrap = 200;
  std::uint64_t seed = 1;
  int jobs = 1;
  int target = -1;  // outcome time predicted, default K+1
};

struct RegimePrediction {
  std::string label;
  double mean = 0.0;
  double se = 0.0;
  int bootstrap = 0;
  int bootstrap_failures = 0;
  bool no_current_interaction = true;
  std::vector<std::string> notes;
};

// psi estimate recomputed on a resampled panel (bootstrap)
using Refit = std::function<Eigen::VectorXd(const Panel& panel)>;

// point prediction at psi without a standard error
double regime_mean(const Panel& panel, const BlipSpec& spec, const Eigen::VectorXd& psi, const RegimeSpec& regime,
                   const FeatureMap& inner_features, int target = -1);

RegimePrediction predict_regime_mean(const Panel& panel, const BlipSpec& spec, const EstimateResult& fit,
                                     const RegimeSpec& regime, const Refit& refit, const PredictOptions& options = {});

// controlled direct effect blip m(a_0, a_1, L_0; psi); every term needs the factor A[0]
struct CdeSpec {
  std::vector<Expression> features;
  std::vector<std::string> psi_names;
  FeatureMap outcome;  // working model for E{Y - m | L_0, A_1}; may read L[0] and A[1] only
  double max_weight = 1e4;
};

EstimateResult fit_cde(const Panel& panel, const CdeSpec& cde, const PropensityFit& prop_a0,
                       const PropensityFit& mediator);

}  // namespace gestimate
