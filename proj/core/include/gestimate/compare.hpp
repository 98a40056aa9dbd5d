#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gestimate/gest.hpp"
#include "gestimate/nuisance.hpp"
#include "gestimate/panel.hpp"

namespace gestimate {

// E(Y | A = a, L) for a point treatment
using ArmMean = std::function<double(const HistoryView& h, double a)>;

// separate least-squares fits within each arm on features of L
ArmMean fit_arm_means(const Panel& panel, const FeatureMap& features);

struct IpwMsmResult {
  EstimateResult augmented;
  EstimateResult plain;
};

IpwMsmResult fit_ipw_msm(const Panel& panel, const PropensityFit& prop, const ArmMean& arms);

// Y on (features(L), A); features must include the intercept if wanted
EstimateResult fit_ols(const Panel& panel, const FeatureMap& features);

// Y on (1, e(L), A)
EstimateResult fit_ps_regression(const Panel& panel, const PropensityFit& prop);

struct DiscreteLaw {
  std::vector<double> prob;  // P(L = l)
  std::vector<double> e;     // P(A = 1 | L = l)
};

struct VarianceReport {
  double var_gest = 0.0;
  double var_ipw = 0.0;
  double var_gest_misspec = 0.0;
  double var_ipw_misspec = 0.0;
  double pooling_limit = 0.0;
  double sigma2 = 1.0;
  double psi_star = 0.0;
  DiscreteLaw law;
  std::vector<double> delta;
  std::vector<double> psi;
};

// delta and psi default to zero; psi_star is the homogeneous effect entering the IPW misspecification formula
VarianceReport analytic_variances(const DiscreteLaw& law, double sigma2, std::vector<double> delta = {},
                                  std::vector<double> psi = {}, double psi_star = 0.0);

struct PoolingCheck {
  int reps = 0;
  int failures = 0;
  double mc_mean = 0.0;
  double se_mc = 0.0;
  double analytic = 0.0;
  std::vector<double> estimates;
};

// fits the homogeneous blip psi * a by G-estimation on replicated panels and compares the average
// estimate with the weighted limit E{Var(A|L) psi(L)} / E{Var(A|L)}
PoolingCheck pooling_check(const std::function<Panel(int rep)>& generate, int reps, const FeatureMap& propensity,
                           const FeatureMap& outcome, double analytic, int jobs = 1);

}  // namespace gestimate
