#pragma once

// independent reference computations used by the tests; deliberately not routed through the library

#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline Eigen::VectorXd ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  return X.colPivHouseholderQr().solve(y);
}

// just-identified instrumental variables: (Z'X)^{-1} Z'y
inline Eigen::VectorXd two_sls(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, const Eigen::VectorXd& y) {
  if (Z.cols() == X.cols()) return (Z.transpose() * X).fullPivLu().solve(Z.transpose() * y);
  Eigen::MatrixXd P = Z * (Z.transpose() * Z).ldlt().solve(Z.transpose() * X);
  return (P.transpose() * X).fullPivLu().solve(P.transpose() * y);
}

// plain Newton iterations for logistic regression without safeguards
inline Eigen::VectorXd logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int iters = 50) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(X.cols());
  for (int it = 0; it < iters; ++it) {
    Eigen::VectorXd p = (X * b).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    Eigen::VectorXd w = p.array() * (1.0 - p.array());
    Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X;
    b += H.ldlt().solve(X.transpose() * (y - p));
  }
  return b;
}

inline double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

inline double sd(const std::vector<double>& v) {
  double m = mean(v), ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / (v.size() - 1.0));
}

inline double variance(const std::vector<double>& v) {
  double s = sd(v);
  return s * s;
}

}  // namespace oracle
