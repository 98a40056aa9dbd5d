#include "gestimate/linalg.hpp"

#include <cmath>

#include "gestimate/error.hpp"

namespace gestimate {

double expit(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

namespace {

void check_rank(const MatrixXd& Xw) {
  if (Xw.cols() == 0) return;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(Xw);
  qr.setThreshold(1e-10);
  if (qr.rank() < Xw.cols()) throw NumericalError("singular design: regression features are collinear");
}

}  // namespace

LeastSquares least_squares(const MatrixXd& X, const VectorXd& y, const VectorXd* w) {
  const Eigen::Index n = X.rows();
  VectorXd sw = w ? VectorXd(w->array().sqrt()) : VectorXd::Ones(n);
  MatrixXd Xw = sw.asDiagonal() * X;
  if (n < X.cols()) throw NumericalError("singular design: fewer rows than features");
  Eigen::ColPivHouseholderQR<MatrixXd> qr(Xw);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols()) throw NumericalError("singular design: regression features are collinear");
  LeastSquares out;
  out.coef = qr.solve(VectorXd(sw.cwiseProduct(y)));
  out.fitted = X * out.coef;
  out.residual = y - out.fitted;
  double ss = w ? out.residual.cwiseProduct(out.residual).dot(*w) : out.residual.squaredNorm();
  double wsum = w ? w->sum() : double(n);
  out.sigma2 = n > X.cols() ? ss / (wsum * (double(n - X.cols()) / n)) : 0.0;
  return out;
}

Projector::Projector(const MatrixXd& X, const VectorXd& w) : X_(X) {
  if (X.cols() == 0) return;
  if (X.rows() < X.cols()) throw NumericalError("singular design: fewer rows than features");
  check_rank(w.array().sqrt().matrix().asDiagonal() * X);
  MatrixXd XtW = X.transpose() * w.asDiagonal();
  MatrixXd gram = XtW * X;
  gram_inv_ = gram.ldlt().solve(MatrixXd::Identity(X.cols(), X.cols()));
  solve_ = gram_inv_ * XtW;
}

VectorXd Projector::coef(const VectorXd& y) const {
  if (X_.cols() == 0) return VectorXd();
  return solve_ * y;
}

VectorXd Projector::residual(const VectorXd& y) const {
  if (X_.cols() == 0) return y;
  return y - X_ * (solve_ * y);
}

MatrixXd Projector::residual(const MatrixXd& Y) const {
  if (X_.cols() == 0) return Y;
  return Y - X_ * (solve_ * Y);
}

LogisticResult logistic_fit(const MatrixXd& X, const VectorXd& y, const VectorXd* offset,
                            const std::vector<std::string>& names, int max_iter, double tol) {
  const Eigen::Index n = X.rows(), q = X.cols();
  if (n == 0) throw NumericalError("logistic regression with no rows");
  for (Eigen::Index i = 0; i < n; ++i)
    if (y[i] != 0.0 && y[i] != 1.0) throw DataError("logistic regression needs a 0/1 response");

  // standardize non-constant columns; centering only when some column is constant
  VectorXd center = VectorXd::Zero(q), scale = VectorXd::Ones(q);
  bool has_const = false;
  std::vector<bool> constant(q, false);
  for (Eigen::Index j = 0; j < q; ++j) {
    double mu = X.col(j).mean();
    double sd = std::sqrt((X.col(j).array() - mu).square().mean());
    if (sd <= 1e-12 * std::max(1.0, std::abs(mu))) {
      constant[j] = true;
      has_const = true;
      if (mu == 0.0) throw NumericalError("singular design: feature '" + names.at(j) + "' is identically zero");
      scale[j] = mu;
    } else {
      scale[j] = sd;
    }
  }
  if (has_const)
    for (Eigen::Index j = 0; j < q; ++j)
      if (!constant[j]) center[j] = X.col(j).mean();
  MatrixXd Z = (X.rowwise() - center.transpose()).array().rowwise() / scale.transpose().array();
  check_rank(Z);

  VectorXd off = offset ? *offset : VectorXd::Zero(n);
  VectorXd b = VectorXd::Zero(q);
  auto loglik = [&](const VectorXd& beta) {
    VectorXd eta = Z * beta + off;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double e = eta[i];
      double l1 = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
      ll += y[i] * e - l1;
    }
    return ll / n;
  };

  LogisticResult res;
  VectorXd p(n), grad(q);
  double ll = loglik(b);
  int it = 0;
  for (;; ++it) {
    VectorXd eta = Z * b + off;
    for (Eigen::Index i = 0; i < n; ++i) p[i] = expit(eta[i]);
    grad = Z.transpose() * (y - p) / double(n);
    double gmax = grad.cwiseAbs().maxCoeff();
    res.max_gradient = gmax;
    if (it >= max_iter) break;
    VectorXd wv = p.array() * (1.0 - p.array());
    MatrixXd H = Z.transpose() * wv.asDiagonal() * Z / double(n);
    VectorXd step = H.ldlt().solve(grad);
    if (!step.allFinite()) step = H.completeOrthogonalDecomposition().solve(grad);
    // under separation the gradient vanishes while the Newton step stays of order one
    if (gmax < tol && step.cwiseAbs().maxCoeff() < 1e-6) break;
    double t = 1.0;
    VectorXd cand = b + step;
    double llc = loglik(cand);
    while (llc < ll - 1e-15 && t > 1e-4) {
      t *= 0.5;
      cand = b + t * step;
      llc = loglik(cand);
    }
    b = cand;
    ll = llc;
    for (Eigen::Index j = 0; j < q; ++j)
      if (std::abs(b[j]) > 30.0)
        throw NumericalError("perfect separation detected: coefficient of feature '" + names.at(j) +
                             "' diverges");
  }
  res.iterations = it;
  if (res.max_gradient >= tol && res.max_gradient > 1e-8)
    throw NumericalError("logistic regression did not converge in " + std::to_string(max_iter) + " iterations");

  // back to the original scale
  VectorXd coef(q);
  double shift = 0.0;
  for (Eigen::Index j = 0; j < q; ++j)
    if (!constant[j]) {
      coef[j] = b[j] / scale[j];
      shift += b[j] * center[j] / scale[j];
    }
  bool assigned = false;
  for (Eigen::Index j = 0; j < q; ++j)
    if (constant[j]) {
      coef[j] = (b[j] - (assigned ? 0.0 : shift)) / scale[j];
      assigned = true;
    }
  res.coef = coef;
  VectorXd eta = X * coef + off;
  res.prob.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) res.prob[i] = expit(eta[i]);
  return res;
}

bool is_symmetric_psd(const MatrixXd& S, double tol) {
  if (S.rows() != S.cols()) return false;
  double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > tol * scale) return false;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (S + S.transpose()));
  return es.eigenvalues().minCoeff() >= -tol * scale;
}

}  // namespace gestimate
