#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gestimate/blip.hpp"
#include "gestimate/expr.hpp"
#include "gestimate/panel.hpp"

namespace gestimate {

enum class Family { bernoulli_logit, gaussian_identity };

const char* family_name(Family f);
Family parse_family(const std::string& name);

// named expression list evaluated on a history; either one list for every time or one per time
class FeatureMap {
 public:
  FeatureMap() = default;
  static FeatureMap parse(const std::vector<std::string>& exprs, const Symbols& symbols);
  static FeatureMap parse_per_time(const std::vector<std::vector<std::string>>& exprs, const Symbols& symbols);

  bool empty() const { return exprs_.empty(); }
  bool per_time() const { return exprs_.size() > 1; }
  std::size_t size(int m) const { return list(m).size(); }
  const std::vector<std::string>& names(int m) const;
  Eigen::VectorXd eval(const VariableSource& h, int m) const;

 private:
  const std::vector<Expression>& list(int m) const;
  std::vector<std::vector<Expression>> exprs_;
  std::vector<std::vector<std::string>> names_;
};

// subjects with A_m recorded
std::vector<std::size_t> at_risk(const Panel& panel, int m);

// design rows for time m; features see (L̄_m, Ā_{m-1}) unless the current treatment is requested
Eigen::MatrixXd history_design(const Panel& panel, const FeatureMap& features, int m,
                               const std::vector<std::size_t>& rows, bool with_current_treatment = false);

using OffsetFn = std::function<double(std::size_t subject, int m)>;
using KnownMean = std::function<double(const HistoryView& h)>;

struct PropensityTime {
  int m = 0;
  Eigen::VectorXd alpha;
  double sigma2 = 1.0;
  int iterations = 0;
  double max_gradient = 0.0;
};

class PropensityFit {
 public:
  Family family() const { return family_; }
  const FeatureMap& features() const { return features_; }
  // false for fixed or known propensities: no score block is stacked
  bool estimated() const { return estimated_; }
  bool has_time(int m) const;
  const PropensityTime& at(int m) const;
  const std::vector<PropensityTime>& times() const { return times_; }
  bool known_function() const { return static_cast<bool>(known_); }

  double linear_predictor(const HistoryView& h) const;
  // E(A_m | L̄_m, Ā_{m-1}) at h.m(); A_m itself is never read
  double predict(const HistoryView& h) const;
  double variance(int m) const;
  // f(A_m | history) at the observed A_m
  double density(const HistoryView& h) const;

  friend PropensityFit fit_propensity(const Panel&, const FeatureMap&, Family, const std::vector<int>&,
                                      const OffsetFn&);
  friend PropensityFit fixed_propensity(const FeatureMap&, Family, std::vector<Eigen::VectorXd>, double);
  friend PropensityFit known_propensity(KnownMean, Family, int, double);

 private:
  Family family_ = Family::bernoulli_logit;
  FeatureMap features_;
  std::vector<PropensityTime> times_;
  KnownMean known_;
  bool estimated_ = false;
};

// per-time maximum likelihood fits; times empty means every time 0..K
PropensityFit fit_propensity(const Panel& panel, const FeatureMap& features, Family family = Family::bernoulli_logit,
                             const std::vector<int>& times = {}, const OffsetFn& offset = {});
PropensityFit fixed_propensity(const FeatureMap& features, Family family, std::vector<Eigen::VectorXd> alpha,
                               double sigma2 = 1.0);
PropensityFit known_propensity(KnownMean mean, Family family = Family::bernoulli_logit, int K = 0,
                               double sigma2 = 1.0);

// working model B for one ψ: regression of U*_{m,k}(ψ) on features of (L̄_m, Ā_{m-1})
struct OutcomeSlotFit {
  int m = 0, k = 0;
  std::vector<std::size_t> rows;
  Eigen::VectorXd beta;
  Eigen::VectorXd response;
  Eigen::VectorXd fitted;
  double sigma2 = 0.0;
};

struct OutcomeFit {
  FeatureMap features;
  std::vector<OutcomeSlotFit> slots;
  const OutcomeSlotFit& at(int m, int k) const;
  double predict(int m, int k, const HistoryView& h) const;
};

OutcomeFit fit_outcome_working(const Panel& panel, const BlipSpec& spec, const Eigen::VectorXd& psi,
                               const FeatureMap& features);

// how gest builds model B at each ψ; zero uses E{U*(ψ) | history} = 0
struct OutcomeModel {
  FeatureMap features;
  bool zero = false;
};

// E(Y | L, A) for a point treatment, e.g. the logistic outcome model used by the logit-link plug-in
class OutcomeMeanFit : public MeanPredictor {
 public:
  OutcomeMeanFit() = default;
  OutcomeMeanFit(FeatureMap features, Family family, Eigen::VectorXd coef);
  double mean(const HistoryView& h) const override;
  const Eigen::VectorXd& coef() const { return coef_; }
  Family family() const { return family_; }

 private:
  FeatureMap features_;
  Family family_ = Family::bernoulli_logit;
  Eigen::VectorXd coef_;
};

// regression of Y_{K+1} on features evaluated with the current treatment visible (K = 0)
OutcomeMeanFit fit_outcome_mean(const Panel& panel, const FeatureMap& features,
                                Family family = Family::bernoulli_logit);

using SensitivityFunction = std::function<double(double u, const HistoryView& h, double a)>;

double tilted_propensity(double p, double q);
double tilted_propensity(const PropensityFit& fit, const SensitivityFunction& q, double u, const HistoryView& h);

}  // namespace gestimate
