#pragma once

#include <cmath>

#include "slopelab/numerics/linalg.hpp"

namespace slopelab::numerics {

enum class CovKind {
  RandomEffects,  // Psi (dim x dim) for random effects plus residual variance
  Unstructured,   // free dim x dim covariance over discrete visits
};

/// Unconstrained log-Cholesky encoding of a covariance block.
///
/// The lower triangle of the Cholesky factor is stored row by row; diagonal
/// entries are stored as logs. RandomEffects appends log(sigma) as the last
/// entry.
struct CovarianceParam {
  CovKind kind = CovKind::RandomEffects;
  int dim = 0;
  Vector theta;

  static int n_chol(int dim) { return dim * (dim + 1) / 2; }

  static int n_params(CovKind kind, int dim) {
    return n_chol(dim) + (kind == CovKind::RandomEffects ? 1 : 0);
  }

  int n_params() const { return n_params(kind, dim); }

  Matrix cholesky() const {
    Matrix l = Matrix::Zero(dim, dim);
    int k = 0;
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j <= i; ++j, ++k) l(i, j) = (i == j) ? std::exp(theta[k]) : theta[k];
    return l;
  }

  /// Psi for RandomEffects, Sigma for Unstructured.
  Matrix matrix() const {
    Matrix l = cholesky();
    return l * l.transpose();
  }

  double residual_variance() const {
    return kind == CovKind::RandomEffects ? std::exp(2.0 * theta[n_chol(dim)]) : 0.0;
  }

  static Vector encode_cholesky(const Matrix& l) {
    const int dim = static_cast<int>(l.rows());
    Vector theta(n_chol(dim));
    int k = 0;
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j <= i; ++j, ++k) theta[k] = (i == j) ? std::log(l(i, j)) : l(i, j);
    return theta;
  }

  static CovarianceParam random_effects(const Matrix& psi, double sigma2) {
    CovarianceParam p{CovKind::RandomEffects, static_cast<int>(psi.rows()), Vector(n_params(CovKind::RandomEffects, static_cast<int>(psi.rows())))};
    Eigen::LLT<Matrix> llt(psi);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::NotPD, "Psi is not positive definite");
    p.theta.head(n_chol(p.dim)) = encode_cholesky(llt.matrixL());
    p.theta[n_chol(p.dim)] = 0.5 * std::log(sigma2);
    return p;
  }

  static CovarianceParam unstructured(const Matrix& sigma) {
    CovarianceParam p{CovKind::Unstructured, static_cast<int>(sigma.rows()), Vector()};
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::NotPD, "Sigma is not positive definite");
    p.theta = encode_cholesky(llt.matrixL());
    return p;
  }

  CovarianceParam with_theta(Vector t) const { return CovarianceParam{kind, dim, std::move(t)}; }
};

}  // namespace slopelab::numerics
