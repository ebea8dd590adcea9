#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "slopelab/estimators/design.hpp"
#include "slopelab/estimators/linear.hpp"

namespace slopelab {

namespace detail {

/// Pairwise-complete covariance of OLS cell-mean residuals, used as the
/// unstructured starting value.
inline numerics::CovarianceParam mmrm_start(const std::vector<numerics::SubjectBlock>& blocks,
                                            const design::OlsFit& ols, int n_visits, double floor) {
  using numerics::Matrix;
  Matrix sum = Matrix::Zero(n_visits, n_visits);
  Matrix count = Matrix::Zero(n_visits, n_visits);
  for (const auto& b : blocks) {
    numerics::Vector r = b.y - b.X * ols.beta;
    for (std::size_t i = 0; i < b.visits.size(); ++i)
      for (std::size_t j = 0; j < b.visits.size(); ++j) {
        sum(b.visits[i], b.visits[j]) += r[i] * r[j];
        count(b.visits[i], b.visits[j]) += 1.0;
      }
  }
  Matrix sigma = Matrix::Zero(n_visits, n_visits);
  for (int i = 0; i < n_visits; ++i)
    for (int j = 0; j < n_visits; ++j)
      if (count(i, j) >= 2.0) sigma(i, j) = sum(i, j) / count(i, j);
  for (int i = 0; i < n_visits; ++i) sigma(i, i) = std::max(sigma(i, i), floor);

  // Pairwise-complete estimates need not be PD; shrink correlations until they are.
  Matrix diag = sigma.diagonal().asDiagonal();
  for (double keep : {1.0, 0.99, 0.95, 0.9, 0.75, 0.5}) {
    Matrix trial = keep * sigma + (1.0 - keep) * diag;
    Eigen::LLT<Matrix> llt(trial);
    if (llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 1e-4 * std::sqrt(floor)).all())
      return numerics::CovarianceParam::unstructured(trial);
  }
  return numerics::CovarianceParam::unstructured(diag);
}

}  // namespace detail

/// Mixed model for repeated measures: one mean per (arm, visit) with the
/// baseline mean shared across arms (unless options.mmrm_separate_baseline)
/// and an unstructured covariance over all visits shared by the arms.
inline FitResult fit_mmrm(const LongitudinalDataset& ds, const FitOptions& options = {}) {
  detail::require_two_arms(ds);
  const auto& grid = ds.grid();
  const int n_visits = static_cast<int>(grid.size());
  if (n_visits < 2) throw Error(ErrorCode::EmptyCell, "no post-baseline visits");

  MmrmLayout layout;
  auto d = design::mmrm_design(ds, options.mmrm_separate_baseline, layout);
  for (ArmId a = 0; a < ds.n_arms(); ++a) {
    bool any = false;
    for (int j = 1; j < n_visits; ++j) any = any || layout.cell_column[a][j] >= 0;
    if (!any) throw Error(ErrorCode::EmptyCell, "arm " + std::to_string(a) + " has no post-baseline data");
  }

  auto ols = design::ols(d.blocks);
  const double var_y = detail::response_variance(ds);
  const double floor = 1e-6 * (var_y > 0.0 ? var_y : 1.0);
  const double nugget = detail::nugget_for(ds);
  auto search = numerics::group_blocks(detail::centered(d.blocks, detail::response_mean(ds)), nugget);
  auto grouped = numerics::group_blocks(d.blocks, nugget);
  auto start = detail::mmrm_start(d.blocks, ols, n_visits, floor);

  numerics::Objective objective = [&](const numerics::Vector& theta) {
    return numerics::reml_deviance(search, start.with_theta(theta));
  };
  numerics::Gradient gradient = [&](const numerics::Vector& theta) {
    return numerics::reml_deviance_gradient(search, start.with_theta(theta)).gradient;
  };
  auto res = detail::optimize_or_best(objective, gradient, start.theta, options.optimizer);
  auto param = start.with_theta(res.theta_hat);
  auto gls = numerics::reml_evaluate(grouped, param);

  FitResult fit;
  fit.method = Method::MMRM;
  fit.n_arms = ds.n_arms();
  fit.coef_names = std::move(d.coef_names);
  fit.beta = gls.beta;
  fit.cov_beta = gls.cov_beta;
  fit.cov_params = param;
  fit.deviance = gls.deviance;
  fit.aic = gls.deviance + 2.0 * (param.n_params() + static_cast<int>(fit.beta.size()));
  fit.grid = grid;
  fit.mmrm = std::move(layout);
  fit.diagnostics.converged = res.converged;
  fit.diagnostics.opt = std::move(res);
  fit.diagnostics.subjects_used = static_cast<int>(ds.n_subjects());
  fit.diagnostics.n_obs = static_cast<int>(ds.size());
  return fit;
}

}  // namespace slopelab
