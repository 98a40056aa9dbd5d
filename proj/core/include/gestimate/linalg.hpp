#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gestimate {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double expit(double x);
double logit(double p);

struct LeastSquares {
  VectorXd coef;
  VectorXd fitted;
  VectorXd residual;
  double sigma2 = 0.0;
};

// weighted least squares; throws NumericalError on a rank-deficient design
LeastSquares least_squares(const MatrixXd& X, const VectorXd& y, const VectorXd* w = nullptr);

// repeated weighted regressions on one fixed design; zero columns means the projection is 0
class Projector {
 public:
  Projector() = default;
  Projector(const MatrixXd& X, const VectorXd& w);

  int cols() const { return static_cast<int>(X_.cols()); }
  VectorXd coef(const VectorXd& y) const;
  VectorXd residual(const VectorXd& y) const;
  MatrixXd residual(const MatrixXd& Y) const;
  const MatrixXd& design() const { return X_; }
  // (X'WX)^{-1}
  const MatrixXd& gram_inverse() const { return gram_inv_; }

 private:
  MatrixXd X_;
  MatrixXd solve_;  // (X'WX)^{-1} X'W
  MatrixXd gram_inv_;
};

struct LogisticResult {
  VectorXd coef;
  VectorXd prob;
  int iterations = 0;
  double max_gradient = 0.0;
};

// Newton-Raphson for a logistic regression with optional offset. Stops when the max-norm of the
// mean score falls below tol. Coefficients beyond 30 in absolute value on standardized features
// are reported as separation, naming the feature.
LogisticResult logistic_fit(const MatrixXd& X, const VectorXd& y, const VectorXd* offset,
                            const std::vector<std::string>& names, int max_iter = 50, double tol = 1e-10);

bool is_symmetric_psd(const MatrixXd& S, double tol = 1e-10);

}  // namespace gestimate
