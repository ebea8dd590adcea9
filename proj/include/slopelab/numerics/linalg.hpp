#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>

#include "slopelab/error.hpp"

namespace slopelab::numerics {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Relative diagonal jitter levels tried, in order, by factor_psd.
inline constexpr std::array<double, 4> kJitterLevels{0.0, 1e-10, 1e-8, 1e-6};

/// Cholesky factorization of a symmetric matrix that is PD or nearly so. On
/// failure the diagonal is inflated by jitter * mean(diag(M)) at escalating
/// levels; throws NotPD once every level fails.
inline Eigen::LLT<Matrix> factor_psd(const Matrix& m) {
  const double scale = m.rows() > 0 ? std::abs(m.diagonal().mean()) : 0.0;
  for (double level : kJitterLevels) {
    Eigen::LLT<Matrix> llt;
    if (level == 0.0) {
      llt.compute(m);
    } else {
      Matrix j = m;
      j.diagonal().array() += level * scale;
      llt.compute(j);
    }
    if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().allFinite() &&
        (llt.matrixLLT().diagonal().array() > 0.0).all())
      return llt;
  }
  throw Error(ErrorCode::NotPD, "matrix is not positive definite after jitter");
}

/// Lower-triangular L with L L^T = M (+ jitter, see factor_psd).
inline Matrix chol_psd(const Matrix& m) {
  Matrix l = factor_psd(m).matrixL();
  return l;
}

inline double log_det(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace slopelab::numerics
