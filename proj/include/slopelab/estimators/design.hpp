#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "slopelab/core.hpp"
#include "slopelab/csv.hpp"
#include "slopelab/estimators/fit_result.hpp"
#include "slopelab/numerics/reml.hpp"

namespace slopelab::design {

using numerics::Matrix;
using numerics::SubjectBlock;
using numerics::Vector;

struct ModelDesign {
  std::vector<SubjectBlock> blocks;
  std::vector<std::string> coef_names;
};

inline std::string arm_label(ArmId a) { return "arm" + std::to_string(a); }

inline double hinge(double t, double tau0) { return std::max(t - tau0, 0.0); }

/// Design with a common intercept/time block plus one dummy and one
/// interaction per non-reference arm for each basis function in `basis`.
///   columns: basis..., then for each arm k >= 1: arm_k * basis...
/// The first basis entry must be the constant. Z holds the basis itself.
template <class Basis>
ModelDesign arm_interaction_design(const LongitudinalDataset& ds, const std::vector<std::string>& basis_names,
                                   Basis&& basis) {
  const int nb = static_cast<int>(basis_names.size());
  const int k_arms = ds.n_arms();
  const int p = nb * k_arms;
  ModelDesign d;
  d.coef_names = basis_names;
  for (ArmId a = 1; a < k_arms; ++a)
    for (int b = 0; b < nb; ++b)
      d.coef_names.push_back(b == 0 ? arm_label(a) : arm_label(a) + ":" + basis_names[b]);

  d.blocks.reserve(ds.n_subjects());
  for (const auto& s : ds.subjects()) {
    auto rows = ds.rows(s);
    const auto m = static_cast<Eigen::Index>(rows.size());
    SubjectBlock blk;
    blk.y.resize(m);
    blk.X = Matrix::Zero(m, p);
    blk.Z.resize(m, nb);
    for (Eigen::Index r = 0; r < m; ++r) {
      blk.y[r] = rows[r].egfr;
      for (int b = 0; b < nb; ++b) {
        const double v = basis(b, rows[r].time);
        blk.Z(r, b) = v;
        blk.X(r, b) = v;
        if (s.arm > 0) blk.X(r, nb * s.arm + b) = v;
      }
    }
    d.blocks.push_back(std::move(blk));
  }
  return d;
}

/// Intercept + time, per-arm shifts in both (LM and LME).
inline ModelDesign linear_design(const LongitudinalDataset& ds) {
  return arm_interaction_design(ds, {"(Intercept)", "time"},
                                [](int b, double t) { return b == 0 ? 1.0 : t; });
}

/// Intercept + time + max(t - tau0, 0), per-arm shifts in all three.
inline ModelDesign two_slope_design(const LongitudinalDataset& ds, double tau0) {
  return arm_interaction_design(ds, {"(Intercept)", "time", "hinge"}, [tau0](int b, double t) {
    return b == 0 ? 1.0 : (b == 1 ? t : hinge(t, tau0));
  });
}

inline int grid_index(const std::vector<double>& grid, double t) {
  auto it = std::lower_bound(grid.begin(), grid.end(), t);
  if (it == grid.end() || *it != t) return -1;
  return static_cast<int>(it - grid.begin());
}

/// Discrete-visit means design. Columns are per-(arm, visit) cell means for
/// every observed cell; the baseline cell is shared across arms unless
/// `separate_baseline`. This spans the same space as visit means plus
/// arm-difference terms, via a unit-triangular map.
inline ModelDesign mmrm_design(const LongitudinalDataset& ds, bool separate_baseline, MmrmLayout& layout) {
  const auto& grid = ds.grid();
  const int n_visits = static_cast<int>(grid.size());
  const int k_arms = ds.n_arms();

  std::vector<std::vector<int>> counts(k_arms, std::vector<int>(n_visits, 0));
  for (const auto& m : ds.measurements()) ++counts[m.arm][grid_index(grid, m.time)];

  ModelDesign d;
  layout.separate_baseline = separate_baseline;
  layout.cell_column.assign(k_arms, std::vector<int>(n_visits, -1));
  auto visit_name = [&](int j) { return "t=" + csv::format_double(grid[j]); };
  int col = 0;
  if (!separate_baseline) {
    for (ArmId a = 0; a < k_arms; ++a) layout.cell_column[a][0] = col;
    d.coef_names.push_back("mean[" + visit_name(0) + "]");
    ++col;
  }
  for (ArmId a = 0; a < k_arms; ++a) {
    for (int j = separate_baseline ? 0 : 1; j < n_visits; ++j) {
      if (counts[a][j] == 0) continue;
      layout.cell_column[a][j] = col++;
      d.coef_names.push_back("mean[" + arm_label(a) + "," + visit_name(j) + "]");
    }
  }

  d.blocks.reserve(ds.n_subjects());
  for (const auto& s : ds.subjects()) {
    auto rows = ds.rows(s);
    const auto m = static_cast<Eigen::Index>(rows.size());
    SubjectBlock blk;
    blk.y.resize(m);
    blk.X = Matrix::Zero(m, col);
    for (Eigen::Index r = 0; r < m; ++r) {
      const int j = grid_index(grid, rows[r].time);
      blk.y[r] = rows[r].egfr;
      blk.X(r, layout.cell_column[s.arm][j]) = 1.0;
      blk.visits.push_back(j);
    }
    d.blocks.push_back(std::move(blk));
  }
  return d;
}

struct OlsFit {
  Vector beta;
  Matrix cov_beta;
  double sigma2 = 0.0;
  double rss = 0.0;
  int n = 0;
};

/// Ordinary least squares over all stacked rows; classical covariance
/// sigma^2 (X'X)^-1 with sigma^2 = RSS / (n - p).
inline OlsFit ols(const std::vector<SubjectBlock>& blocks) {
  Eigen::Index n = 0;
  const Eigen::Index p = blocks.empty() ? 0 : blocks.front().X.cols();
  for (const auto& b : blocks) n += b.X.rows();
  Matrix x(n, p);
  Vector y(n);
  Eigen::Index r = 0;
  for (const auto& b : blocks) {
    x.middleRows(r, b.X.rows()) = b.X;
    y.segment(r, b.X.rows()) = b.y;
    r += b.X.rows();
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(x);
  if (p == 0 || qr.rank() < p)
    throw Error(ErrorCode::SingularDesign, "design matrix is rank deficient");
  OlsFit f;
  f.n = static_cast<int>(n);
  f.beta = qr.solve(y);
  f.rss = (y - x * f.beta).squaredNorm();
  f.sigma2 = n > p ? f.rss / static_cast<double>(n - p) : std::numeric_limits<double>::quiet_NaN();
  Matrix xtx = x.transpose() * x;
  f.cov_beta = f.sigma2 * xtx.ldlt().solve(Matrix::Identity(p, p));
  return f;
}

}  // namespace slopelab::design
