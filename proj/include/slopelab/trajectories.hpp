#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <optional>
#include <string>
#include <vector>

#include "slopelab/core.hpp"

namespace slopelab {

enum class Setting { S1 = 1, S2 = 2, S3 = 3, S4 = 4 };

inline constexpr std::array<Setting, 4> kAllSettings{Setting::S1, Setting::S2, Setting::S3, Setting::S4};

/// Follow-up horizon of the simulated trials, in years.
inline constexpr double kStudyHorizon = 3.0;

inline int setting_number(Setting s) { return static_cast<int>(s); }

inline Setting setting_from_number(int n) {
  if (n < 1 || n > 4) throw Error(ErrorCode::InvalidConfig, "setting must be 1..4, got " + std::to_string(n));
  return static_cast<Setting>(n);
}

enum class TrajectoryShape { Linear, LogLinear, Hinge };

/// Population mean curve and random-effect structure for one (setting, arm).
///
/// Linear:    beta0 + beta1 * t
/// LogLinear: beta0 + beta1 * log(5t + 1)
/// Hinge:     beta0 + beta1 * t + beta2 * max(t - tau0, 0)
struct TrajectorySpec {
  Setting setting = Setting::S1;
  ArmId arm = kReferenceArm;
  TrajectoryShape shape = TrajectoryShape::Linear;
  double beta0 = 47.5;
  double beta1 = 0.0;
  double beta2 = 0.0;
  std::optional<double> tau0;
  std::vector<double> random_sds;  // (b0, b1[, b2])
  double corr_b0b1 = 0.0;
  double sigma = 1.0;

  double value(double t) const {
    switch (shape) {
      case TrajectoryShape::Linear: return beta0 + beta1 * t;
      case TrajectoryShape::LogLinear: return beta0 + beta1 * std::log(5.0 * t + 1.0);
      case TrajectoryShape::Hinge: return beta0 + beta1 * t + beta2 * std::max(t - *tau0, 0.0);
    }
    return 0.0;
  }

  double derivative(double t) const {
    switch (shape) {
      case TrajectoryShape::Linear: return beta1;
      case TrajectoryShape::LogLinear: return beta1 * 5.0 / (5.0 * t + 1.0);
      case TrajectoryShape::Hinge: return beta1 + (t > *tau0 ? beta2 : 0.0);
    }
    return 0.0;
  }

  std::vector<double> kinks() const {
    if (shape == TrajectoryShape::Hinge) return {*tau0};
    return {};
  }

  void validate() const {
    for (double sd : random_sds)
      if (!(sd >= 0.0)) throw Error(ErrorCode::DomainError, "random-effect SD must be >= 0");
    if (!(std::abs(corr_b0b1) <= 1.0)) throw Error(ErrorCode::DomainError, "|corr| must be <= 1");
    if (!(sigma >= 0.0)) throw Error(ErrorCode::DomainError, "sigma must be >= 0");
    if (shape == TrajectoryShape::Hinge) {
      if (!tau0 || !(*tau0 > 0.0 && *tau0 < kStudyHorizon))
        throw Error(ErrorCode::DomainError, "change-point must lie in (0, horizon)");
      if (random_sds.size() != 3) throw Error(ErrorCode::DomainError, "hinge trajectories need 3 SDs");
    } else if (random_sds.size() != 2) {
      throw Error(ErrorCode::DomainError, "linear trajectories need 2 SDs");
    }
  }
};

/// Simulation-design parameters for each setting. Arm 0 is control, arm 1 treatment.
inline TrajectorySpec trajectory_spec(Setting setting, ArmId arm) {
  if (arm != 0 && arm != 1) throw Error(ErrorCode::InvalidArm, "simulation settings have arms 0 and 1");
  TrajectorySpec s;
  s.setting = setting;
  s.arm = arm;
  s.beta0 = 47.5;
  s.sigma = 1.0;
  s.random_sds = {17.5, 1.0};
  s.corr_b0b1 = 0.5;
  const bool treated = arm == 1;
  switch (setting) {
    case Setting::S1:
      s.beta1 = treated ? -1.5 : -2.25;
      break;
    case Setting::S2:
      s.shape = TrajectoryShape::LogLinear;
      s.beta1 = treated ? -1.5 : -2.31;
      break;
    case Setting::S3:
    case Setting::S4:
      if (!treated) {
        s.beta1 = setting == Setting::S3 ? -2.25 : -2.5;
        break;
      }
      s.shape = TrajectoryShape::Hinge;
      s.beta1 = setting == Setting::S3 ? -4.0 : 2.5;
      s.beta2 = setting == Setting::S3 ? 3.0 : -4.5;
      s.tau0 = 0.5;
      s.random_sds = {17.5, 2.0, 2.0};
      s.corr_b0b1 = 0.0;
      break;
  }
  return s;
}

inline double mean_trajectory(const TrajectorySpec& spec, double t) {
  if (!(t >= 0.0 && t <= kStudyHorizon))
    throw Error(ErrorCode::DomainError, "t must lie in [0, " + std::to_string(kStudyHorizon) + "]");
  return spec.value(t);
}

template <class T>
concept PiecewiseSmoothTrajectory = requires(const T& traj, double t) {
  { traj.derivative(t) } -> std::convertible_to<double>;
  { traj.kinks() } -> std::convertible_to<std::vector<double>>;
};

/// Adapts a derivative callable (plus kink locations) to the trajectory concept.
template <class Derivative>
struct FunctionTrajectory {
  Derivative deriv;
  std::vector<double> kink_points;

  double derivative(double t) const { return deriv(t); }
  std::vector<double> kinks() const { return kink_points; }
};

template <class Derivative>
FunctionTrajectory(Derivative, std::vector<double>) -> FunctionTrajectory<Derivative>;

/// Weighted average of the trajectory's derivative over [t1, t2]. The
/// integration range is split at kinks so each piece is smooth.
template <PiecewiseSmoothTrajectory Traj, class Weight>
double weighted_avg_slope(const Traj& traj, double t1, double t2, Weight&& weight) {
  if (!(t1 < t2)) throw Error(ErrorCode::DomainError, "weighted_avg_slope requires t1 < t2");
  auto checked_weight = [&](double t) {
    double w = weight(t);
    if (!(w > 0.0) || !std::isfinite(w))
      throw Error(ErrorCode::WeightError, "weight must be positive on the interval");
    return w;
  };
  checked_weight(t1);
  checked_weight(t2);

  std::vector<double> cuts{t1};
  for (double k : traj.kinks())
    if (k > t1 && k < t2) cuts.push_back(k);
  std::sort(cuts.begin(), cuts.end());
  cuts.push_back(t2);

  using Quad = boost::math::quadrature::gauss_kronrod<double, 31>;
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    num += Quad::integrate([&](double t) { return checked_weight(t) * traj.derivative(t); }, cuts[i],
                           cuts[i + 1], 15, 1e-13);
    den += Quad::integrate(checked_weight, cuts[i], cuts[i + 1], 15, 1e-13);
  }
  return num / den;
}

template <PiecewiseSmoothTrajectory Traj>
double weighted_avg_slope(const Traj& traj, double t1, double t2) {
  return weighted_avg_slope(traj, t1, t2, [](double) { return 1.0; });
}

/// Closed-form average slope over [0, horizon] for one arm of one setting.
inline double true_total_slope(Setting setting, ArmId arm) {
  const auto s = trajectory_spec(setting, arm);
  switch (s.shape) {
    case TrajectoryShape::Linear: return s.beta1;
    case TrajectoryShape::LogLinear: return s.beta1 * std::log(16.0) / kStudyHorizon;
    case TrajectoryShape::Hinge: return s.beta1 + s.beta2 * (kStudyHorizon - *s.tau0) / kStudyHorizon;
  }
  return 0.0;
}

/// Population average slope of one arm over the estimand's interval (quadrature).
inline double true_arm_slope(Setting setting, ArmId arm, const EstimandSpec& spec) {
  spec.validate();
  if (spec.t2 > kStudyHorizon)
    throw Error(ErrorCode::DomainError, "estimand interval exceeds the simulated horizon");
  return weighted_avg_slope(trajectory_spec(setting, arm), spec.t1, spec.t2);
}

/// Treatment-minus-control difference in average slope over the estimand's interval.
inline double true_effect(Setting setting, const EstimandSpec& spec) {
  return true_arm_slope(setting, 1, spec) - true_arm_slope(setting, 0, spec);
}

}  // namespace slopelab
