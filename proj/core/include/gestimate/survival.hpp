#pragma once

#include <functional>
#include <utility>

#include <Eigen/Dense>

#include "gestimate/blip.hpp"
#include "gestimate/gest.hpp"
#include "gestimate/nuisance.hpp"
#include "gestimate/panel.hpp"

namespace gestimate {

struct SurvTransform {
  double x = 0.0;      // X_m(psi) = min(U_m, C_m)
  bool delta = false;  // event kept after artificial censoring
  double c = 0.0;      // C_m(psi)
  bool artificially_censored = false;
};

// U_m(psi) for a subject with an observed event time
double blipdown_time(const SaftmSpec& spec, const Panel& panel, const SubjectRecord& record,
                     const Eigen::VectorXd& psi, int m);
// same map applied to an arbitrary time t >= t_m along a treatment path (covariates as observed)
double blipdown_time_at(const SaftmSpec& spec, const Panel& panel, const SubjectRecord& record,
                        const Eigen::VectorXd& psi, int m, double t, const double* path);

double censor_bound(const SaftmSpec& spec, const Panel& panel, const SubjectRecord& record,
                    const Eigen::VectorXd& psi, int m);
SurvTransform surv_transform(const SaftmSpec& spec, const Panel& panel, const SubjectRecord& record,
                             const Eigen::VectorXd& psi, int m);

double smooth_weight(double t, double alpha);

struct SaftmOptions {
  double alpha = 0.05;
  IndexMap index;  // default: failure-time blip features of interval m
};

std::pair<EstimateResult, ConfidenceSet> gest_saftm(const Panel& panel, const SaftmSpec& spec,
                                                    const PropensityFit& prop, const OutcomeModel& out,
                                                    const GridSpec& grid, const SaftmOptions& options = {});

// grid statistic at one psi; NaN when undefined. artificial receives the artificial-censoring count
double saftm_statistic(const Panel& panel, const SaftmSpec& spec, const PropensityFit& prop,
                       const OutcomeModel& out, const Eigen::VectorXd& psi, const SaftmOptions& options = {},
                       int* artificial = nullptr);

// the same statistic computed from caller-supplied residuals q(subject, m)
using ResidualFn = std::function<double(std::size_t subject, int m)>;
double residual_score_statistic(const Panel& panel, const SaftmSpec& spec, const PropensityFit& prop,
                                const OutcomeModel& out, const ResidualFn& residual,
                                const SaftmOptions& options = {});

}  // namespace gestimate
