#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "slopelab/estimators/design.hpp"
#include "slopelab/estimators/fit_result.hpp"
#include "slopelab/numerics/optimize.hpp"
#include "slopelab/numerics/reml.hpp"

namespace slopelab {

namespace detail {

inline void require_two_arms(const LongitudinalDataset& ds) {
  if (ds.n_arms() < 2) throw Error(ErrorCode::InvalidArm, "at least two arms are required");
}

inline double response_mean(const LongitudinalDataset& ds) {
  double mean = 0.0;
  for (const auto& m : ds.measurements()) mean += m.egfr;
  return mean / static_cast<double>(ds.size());
}

inline double response_variance(const LongitudinalDataset& ds) {
  const double mean = response_mean(ds);
  double ss = 0.0;
  for (const auto& m : ds.measurements()) ss += (m.egfr - mean) * (m.egfr - mean);
  return ds.size() > 1 ? ss / static_cast<double>(ds.size() - 1) : 0.0;
}

/// Diagonal bump that keeps V bounded away from singular when the data
/// are fit exactly; ~1e-12 of the response variance.
inline double nugget_for(const LongitudinalDataset& ds) {
  const double v = response_variance(ds);
  return 1e-12 * (v > 0.0 ? v : 1.0);
}

/// Moment-based diagonal start for a random-effects covariance: variances of
/// per-subject least-squares coefficients on Z, and the pooled within-subject
/// residual variance for sigma^2.
inline numerics::CovarianceParam random_effects_start(const std::vector<numerics::SubjectBlock>& blocks,
                                                      const design::OlsFit& ols, double floor) {
  using numerics::Matrix;
  using numerics::Vector;
  const auto q = blocks.front().Z.cols();
  std::vector<Vector> coefs;
  double within_ss = 0.0;
  double within_df = 0.0;
  for (const auto& b : blocks) {
    if (b.Z.rows() <= q) continue;
    Eigen::ColPivHouseholderQR<Matrix> qr(b.Z);
    if (qr.rank() < q) continue;
    Vector c = qr.solve(b.y);
    coefs.push_back(c);
    within_ss += (b.y - b.Z * c).squaredNorm();
    within_df += static_cast<double>(b.Z.rows() - q);
  }
  Vector var = Vector::Constant(q, std::isfinite(ols.sigma2) ? ols.sigma2 : floor);
  double sigma2 = var[0] / 2.0;
  if (coefs.size() >= 2) {
    Vector mean = Vector::Zero(q);
    for (const auto& c : coefs) mean += c;
    mean /= static_cast<double>(coefs.size());
    var.setZero();
    for (const auto& c : coefs) var.array() += (c - mean).array().square();
    var /= static_cast<double>(coefs.size() - 1);
    if (within_df > 0.0) sigma2 = within_ss / within_df;
  }
  for (Eigen::Index k = 0; k < q; ++k) var[k] = std::max(var[k], floor);
  sigma2 = std::max(sigma2, floor);
  return numerics::CovarianceParam::random_effects(var.asDiagonal().toDenseMatrix(), sigma2);
}

/// Copy of the blocks with the response mean removed. The covariance search
/// runs on centered data so that shifting every value by a constant leaves
/// the optimizer path unchanged.
inline std::vector<numerics::SubjectBlock> centered(std::vector<numerics::SubjectBlock> blocks, double mean) {
  for (auto& b : blocks) b.y.array() -= mean;
  return blocks;
}

/// Runs maximize_reml and keeps the best point when it fails to converge.
inline numerics::OptResult optimize_or_best(const numerics::Objective& objective, const numerics::Gradient& gradient,
                                            const numerics::Vector& theta0, const numerics::OptOptions& opt) {
  try {
    return numerics::maximize_reml(objective, theta0, opt, gradient);
  } catch (const numerics::NoConvergenceError& e) {
    if (!std::isfinite(e.best().objective_value)) throw;
    return e.best();
  }
}

/// REML fit of a Gaussian random-effects model with unstructured Psi.
inline FitResult fit_random_effects(const LongitudinalDataset& ds, Method method, design::ModelDesign d,
                                    const numerics::OptOptions& opt) {
  auto ols = design::ols(d.blocks);
  const double var_y = response_variance(ds);
  const double floor = 1e-6 * (var_y > 0.0 ? var_y : 1.0);
  const double nugget = nugget_for(ds);
  const auto search_blocks = centered(d.blocks, response_mean(ds));
  auto search = numerics::group_blocks(search_blocks, nugget);
  auto grouped = numerics::group_blocks(d.blocks, nugget);
  auto start = random_effects_start(search_blocks, ols, floor);

  numerics::Objective objective = [&](const numerics::Vector& theta) {
    return numerics::reml_deviance(search, start.with_theta(theta));
  };
  numerics::Gradient gradient = [&](const numerics::Vector& theta) {
    return numerics::reml_deviance_gradient(search, start.with_theta(theta)).gradient;
  };
  auto res = optimize_or_best(objective, gradient, start.theta, opt);
  auto param = start.with_theta(res.theta_hat);
  auto gls = numerics::reml_evaluate(grouped, param);

  FitResult fit;
  fit.method = method;
  fit.n_arms = ds.n_arms();
  fit.coef_names = std::move(d.coef_names);
  fit.beta = gls.beta;
  fit.cov_beta = gls.cov_beta;
  fit.cov_params = param;
  fit.deviance = gls.deviance;
  fit.aic = gls.deviance + 2.0 * (param.n_params() + static_cast<int>(fit.beta.size()));
  fit.grid = ds.grid();
  fit.diagnostics.converged = res.converged;
  fit.diagnostics.opt = std::move(res);
  fit.diagnostics.subjects_used = static_cast<int>(ds.n_subjects());
  fit.diagnostics.n_obs = static_cast<int>(ds.size());
  return fit;
}

}  // namespace detail

/// Pooled OLS on intercept, time, arm dummies and arm-by-time interactions.
inline FitResult fit_lm(const LongitudinalDataset& ds) {
  detail::require_two_arms(ds);
  if (ds.grid().size() < 2) throw Error(ErrorCode::SingularDesign, "need at least two distinct times");
  auto d = design::linear_design(ds);
  auto ols = design::ols(d.blocks);
  FitResult fit;
  fit.method = Method::LM;
  fit.n_arms = ds.n_arms();
  fit.coef_names = std::move(d.coef_names);
  fit.beta = ols.beta;
  fit.cov_beta = ols.cov_beta;
  fit.sigma2 = ols.sigma2;
  fit.grid = ds.grid();
  fit.diagnostics.subjects_used = static_cast<int>(ds.n_subjects());
  fit.diagnostics.n_obs = ols.n;
  return fit;
}

/// Random intercept and slope (unstructured 2x2 Psi) plus residual variance,
/// fitted by REML. Fixed effects as in fit_lm.
inline FitResult fit_lme(const LongitudinalDataset& ds, const numerics::OptOptions& opt = {}) {
  detail::require_two_arms(ds);
  const bool any_repeated = std::any_of(ds.subjects().begin(), ds.subjects().end(),
                                        [](const Subject& s) { return s.size() >= 2; });
  if (!any_repeated) throw Error(ErrorCode::SingularDesign, "no subject has repeated measurements");
  return detail::fit_random_effects(ds, Method::LME, design::linear_design(ds), opt);
}

/// Two-slope model with a change-point at tau0: fixed and random effects on
/// {1, t, max(t - tau0, 0)}, unstructured 3x3 Phi, fitted by REML.
inline FitResult fit_two_slope_lme(const LongitudinalDataset& ds, double tau0,
                                   const numerics::OptOptions& opt = {}) {
  detail::require_two_arms(ds);
  const auto& grid = ds.grid();
  if (!(tau0 > grid.front()) || !std::isfinite(tau0))
    throw Error(ErrorCode::DomainError, "change-point must lie strictly inside the observed time range");
  if (!(tau0 < grid.back())) throw Error(ErrorCode::DegenerateHinge, "no observations after the change-point");
  auto fit = detail::fit_random_effects(ds, Method::TwoSlopeLME, design::two_slope_design(ds, tau0), opt);
  fit.tau0 = tau0;
  return fit;
}

struct ChangepointSelection {
  double tau0 = 0.0;
  FitResult fit;
  /// AIC per candidate in input order; NaN where the fit failed.
  std::vector<double> aic;
};

/// Fits every candidate change-point and keeps the smallest AIC; ties go to
/// the smallest tau0, then to the earliest candidate.
inline ChangepointSelection select_changepoint_aic(const LongitudinalDataset& ds, const std::vector<double>& candidates,
                                                   const numerics::OptOptions& opt = {}) {
  if (candidates.empty()) throw Error(ErrorCode::AllCandidatesFailed, "no candidate change-points");
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return candidates[a] < candidates[b]; });

  ChangepointSelection out;
  out.aic.assign(candidates.size(), std::numeric_limits<double>::quiet_NaN());
  std::optional<std::size_t> best;
  for (auto i : order) {
    try {
      auto fit = fit_two_slope_lme(ds, candidates[i], opt);
      if (!fit.converged()) continue;
      out.aic[i] = *fit.aic;
      if (!best || *fit.aic < out.aic[*best]) {
        best = i;
        out.fit = std::move(fit);
      }
    } catch (const Error&) {
    }
  }
  if (!best) throw Error(ErrorCode::AllCandidatesFailed, "every candidate change-point failed to fit");
  out.tau0 = candidates[*best];
  return out;
}

}  // namespace slopelab
