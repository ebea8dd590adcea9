#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "slopelab/estimators/fit_result.hpp"

namespace slopelab {

/// Per-subject OLS slopes (stage 1), averaged within arm (stage 2).
///
/// beta holds one mean slope per arm; cov_beta is diagonal with the squared
/// standard errors s_k^2 / n_k, so contrasts get the unequal-variance
/// two-sample standard error. Subjects with fewer than two distinct times
/// are excluded and counted.
inline FitResult fit_two_stage(const LongitudinalDataset& ds) {
  if (ds.n_arms() < 2) throw Error(ErrorCode::InvalidArm, "at least two arms are required");
  const int k_arms = ds.n_arms();
  std::vector<std::vector<double>> slopes(k_arms);
  int excluded = 0;
  for (const auto& s : ds.subjects()) {
    auto rows = ds.rows(s);
    if (rows.size() < 2) {
      ++excluded;
      continue;
    }
    double tbar = 0.0, ybar = 0.0;
    for (const auto& m : rows) {
      tbar += m.time;
      ybar += m.egfr;
    }
    tbar /= static_cast<double>(rows.size());
    ybar /= static_cast<double>(rows.size());
    double sxx = 0.0, sxy = 0.0;
    for (const auto& m : rows) {
      sxx += (m.time - tbar) * (m.time - tbar);
      sxy += (m.time - tbar) * (m.egfr - ybar);
    }
    slopes[s.arm].push_back(sxy / sxx);
  }

  FitResult fit;
  fit.method = Method::TwoStage;
  fit.n_arms = k_arms;
  fit.beta.resize(k_arms);
  fit.cov_beta = numerics::Matrix::Zero(k_arms, k_arms);
  for (int a = 0; a < k_arms; ++a) {
    const auto& v = slopes[a];
    if (v.empty())
      throw Error(ErrorCode::ArmEmptyAfterExclusion, "arm " + std::to_string(a) + " has no usable subjects");
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double var = v.size() > 1 ? ss / static_cast<double>(v.size() - 1)
                                     : std::numeric_limits<double>::quiet_NaN();
    fit.beta[a] = mean;
    fit.cov_beta(a, a) = var / static_cast<double>(v.size());
    fit.coef_names.push_back("mean_slope[arm" + std::to_string(a) + "]");
    fit.diagnostics.subjects_used += static_cast<int>(v.size());
  }
  fit.diagnostics.subjects_excluded = excluded;
  fit.diagnostics.n_obs = static_cast<int>(ds.size());
  fit.grid = ds.grid();
  return fit;
}

}  // namespace slopelab
