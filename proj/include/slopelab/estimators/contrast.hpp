#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "slopelab/estimators/design.hpp"
#include "slopelab/estimators/fit_result.hpp"

namespace slopelab {

struct ContrastOptions {
  ArmId target_arm = 1;
  /// MMRM only: report beta2_k - beta2_j (beta2 = arm difference / visit time)
  /// instead of the interval-average contrast (delta_k - delta_j) / (t_k - t_j).
  /// The two agree whenever the interval starts at 0.
  bool mmrm_literal = false;
};

namespace detail {

inline int mmrm_cell(const FitResult& fit, ArmId arm, int visit) {
  const int col = fit.mmrm->cell_column[arm][visit];
  if (col < 0)
    throw Error(ErrorCode::EmptyCell, "arm " + std::to_string(arm) + " has no data at t=" +
                                          std::to_string(fit.grid[visit]));
  return col;
}

inline int mmrm_visit(const FitResult& fit, double t) {
  const int j = design::grid_index(fit.grid, t);
  if (j < 0)
    throw Error(ErrorCode::UnsupportedInterval, "MMRM interval endpoints must be visit times; got " +
                                                    std::to_string(t));
  return j;
}

}  // namespace detail

/// Coefficient weights a with (a' beta) = the arm's model-implied average
/// slope over the estimand's interval.
inline numerics::Vector arm_slope_weights(const FitResult& fit, ArmId arm, const EstimandSpec& spec) {
  spec.validate();
  if (arm < 0 || arm >= fit.n_arms) throw Error(ErrorCode::InvalidArm, "arm " + std::to_string(arm));
  numerics::Vector a = numerics::Vector::Zero(fit.beta.size());
  switch (fit.method) {
    case Method::LM:
    case Method::LME: {
      a[1] = 1.0;
      if (arm > 0) a[2 * arm + 1] = 1.0;
      break;
    }
    case Method::TwoSlopeLME: {
      const double tau0 = *fit.tau0;
      if (spec.t1 != 0.0 && spec.t1 != tau0)
        throw Error(ErrorCode::UnsupportedInterval, "two-slope intervals must start at 0 or at tau0");
      const double hinge_share =
          (design::hinge(spec.t2, tau0) - design::hinge(spec.t1, tau0)) / spec.length();
      a[1] = 1.0;
      a[2] = hinge_share;
      if (arm > 0) {
        a[3 * arm + 1] = 1.0;
        a[3 * arm + 2] = hinge_share;
      }
      break;
    }
    case Method::TwoStage: a[arm] = 1.0; break;
    case Method::MMRM: {
      const int j = detail::mmrm_visit(fit, spec.t1);
      const int k = detail::mmrm_visit(fit, spec.t2);
      a[detail::mmrm_cell(fit, arm, k)] += 1.0 / spec.length();
      a[detail::mmrm_cell(fit, arm, j)] -= 1.0 / spec.length();
      break;
    }
  }
  return a;
}

struct MmrmArmDifferences {
  std::vector<double> times;  // post-baseline visits
  numerics::Vector delta;     // arm minus reference mean at each visit
  numerics::Vector beta2;     // delta / t
  numerics::Matrix cov_beta2;
};

/// Per-visit arm differences and their time-scaled form beta2_j = delta_j / t_j.
inline MmrmArmDifferences mmrm_arm_differences(const FitResult& fit, ArmId arm) {
  if (fit.method != Method::MMRM) throw Error(ErrorCode::DomainError, "not an MMRM fit");
  const int n = static_cast<int>(fit.grid.size()) - 1;
  numerics::Matrix map = numerics::Matrix::Zero(n, fit.beta.size());
  MmrmArmDifferences out;
  for (int j = 1; j <= n; ++j) {
    out.times.push_back(fit.grid[j]);
    map(j - 1, detail::mmrm_cell(fit, arm, j)) += 1.0 / fit.grid[j];
    map(j - 1, detail::mmrm_cell(fit, kReferenceArm, j)) -= 1.0 / fit.grid[j];
  }
  out.beta2 = map * fit.beta;
  out.cov_beta2 = map * fit.cov_beta * map.transpose();
  out.delta = out.beta2;
  for (int j = 0; j < n; ++j) out.delta[j] *= out.times[j];
  return out;
}

/// Coefficient weights for the target-minus-reference effect.
inline numerics::Vector effect_weights(const FitResult& fit, const EstimandSpec& spec,
                                       const ContrastOptions& opt = {}) {
  if (opt.target_arm <= 0 || opt.target_arm >= fit.n_arms)
    throw Error(ErrorCode::InvalidArm, "target arm " + std::to_string(opt.target_arm));
  if (fit.method == Method::MMRM && opt.mmrm_literal) {
    numerics::Vector a = numerics::Vector::Zero(fit.beta.size());
    auto add_beta2 = [&](double t, double sign) {
      if (t == 0.0) return;
      const int j = detail::mmrm_visit(fit, t);
      a[detail::mmrm_cell(fit, opt.target_arm, j)] += sign / t;
      a[detail::mmrm_cell(fit, kReferenceArm, j)] -= sign / t;
    };
    add_beta2(spec.t2, 1.0);
    add_beta2(spec.t1, -1.0);
    return a;
  }
  return arm_slope_weights(fit, opt.target_arm, spec) - arm_slope_weights(fit, kReferenceArm, spec);
}

inline double linear_se(const numerics::Vector& a, const numerics::Matrix& cov) {
  const double v = a.dot(cov * a);
  return std::sqrt(std::max(v, 0.0));
}

/// Maps fitted coefficients to the interval-average slope contrast, with
/// delta-method standard errors (exact, since every mapping is linear) and a
/// normal-quantile 95% interval.
inline SlopeEstimate slope_contrast(const FitResult& fit, const EstimandSpec& spec, const ContrastOptions& opt = {}) {
  SlopeEstimate est;
  est.target_arm = opt.target_arm;
  est.reference_arm = kReferenceArm;
  const auto a = effect_weights(fit, spec, opt);
  est.estimate = a.dot(fit.beta);
  est.se = linear_se(a, fit.cov_beta);
  est.ci_low = est.estimate - kZ975 * est.se;
  est.ci_high = est.estimate + kZ975 * est.se;
  for (ArmId arm = 0; arm < fit.n_arms; ++arm) {
    try {
      const auto w = arm_slope_weights(fit, arm, spec);
      est.arm_slopes.push_back(ArmSlope{arm, w.dot(fit.beta), linear_se(w, fit.cov_beta)});
    } catch (const Error& e) {
      if (arm == kReferenceArm || arm == opt.target_arm) throw;
    }
  }
  return est;
}

}  // namespace slopelab
