#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "slopelab/trajectories.hpp"

using namespace slopelab;

namespace {

// Endpoint difference quotient of the mean curve; the uniform-weight oracle.
double difference_quotient(Setting s, ArmId arm, double t1, double t2) {
  const auto spec = trajectory_spec(s, arm);
  return (mean_trajectory(spec, t2) - mean_trajectory(spec, t1)) / (t2 - t1);
}

}  // namespace

TEST(MeanTrajectory, HandValues) {
  EXPECT_DOUBLE_EQ(mean_trajectory(trajectory_spec(Setting::S1, 0), 0.0), 47.5);
  EXPECT_DOUBLE_EQ(mean_trajectory(trajectory_spec(Setting::S1, 0), 3.0), 40.75);
  EXPECT_DOUBLE_EQ(mean_trajectory(trajectory_spec(Setting::S3, 1), 3.0), 43.0);
  EXPECT_DOUBLE_EQ(mean_trajectory(trajectory_spec(Setting::S2, 1), 3.0), 47.5 - 1.5 * std::log(16.0));
}

TEST(MeanTrajectory, OutsideHorizonIsDomainError) {
  const auto spec = trajectory_spec(Setting::S1, 0);
  EXPECT_THROW(mean_trajectory(spec, -0.1), Error);
  EXPECT_THROW(mean_trajectory(spec, 3.1), Error);
}

TEST(WeightedAvgSlope, LinearIsInvariantToIntervalAndWeight) {
  FunctionTrajectory traj{[](double) { return -2.25; }, std::vector<double>{}};
  std::mt19937_64 eng(1);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int i = 0; i < 20; ++i) {
    double a = u(eng), b = u(eng);
    if (a > b) std::swap(a, b);
    if (b - a < 1e-3) continue;
    EXPECT_NEAR(weighted_avg_slope(traj, a, b, [](double) { return 1.0; }), -2.25, 1e-12);
    EXPECT_NEAR(weighted_avg_slope(traj, a, b, [](double t) { return t + 1.0; }), -2.25, 1e-12);
    EXPECT_NEAR(weighted_avg_slope(traj, a, b, [](double t) { return std::exp(t); }), -2.25, 1e-12);
  }
}

TEST(WeightedAvgSlope, SettingTwoTreatment) {
  const auto spec = trajectory_spec(Setting::S2, 1);
  EXPECT_NEAR(weighted_avg_slope(spec, 0.0, 3.0), -1.5 * std::log(16.0) / 3.0, 1e-10);
}

TEST(WeightedAvgSlope, MatchesClosedFormOnSettingTwoControl) {
  const auto spec = trajectory_spec(Setting::S2, 0);
  EXPECT_NEAR(weighted_avg_slope(spec, 0.0, 3.0), -2.31 * std::log(16.0) / 3.0, 1e-8);
}

TEST(WeightedAvgSlope, NonPositiveWeightIsRejected) {
  const auto spec = trajectory_spec(Setting::S1, 0);
  try {
    weighted_avg_slope(spec, 0.0, 3.0, [](double t) { return t - 1.0; });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::WeightError);
  }
}

TEST(WeightedAvgSlope, EndpointIdentityOnRandomIntervals) {
  std::mt19937_64 eng(2);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (auto s : kAllSettings)
    for (ArmId arm : {0, 1})
      for (int i = 0; i < 100; ++i) {
        double a = u(eng), b = u(eng);
        if (a > b) std::swap(a, b);
        if (b - a < 1e-6) continue;
        EXPECT_NEAR(weighted_avg_slope(trajectory_spec(s, arm), a, b), difference_quotient(s, arm, a, b), 1e-8)
            << setting_number(s) << ' ' << arm << " [" << a << ',' << b << ']';
      }
}

TEST(TrueTotalSlope, TableValues) {
  EXPECT_DOUBLE_EQ(true_total_slope(Setting::S1, 1), -1.5);
  EXPECT_DOUBLE_EQ(true_total_slope(Setting::S1, 0), -2.25);
  EXPECT_NEAR(true_total_slope(Setting::S4, 1), 2.5 - 4.5 * 2.5 / 3.0, 1e-15);
  EXPECT_NEAR(true_total_slope(Setting::S4, 1), -1.25, 1e-12);
  EXPECT_NEAR(true_total_slope(Setting::S3, 1), -1.5, 1e-12);
  EXPECT_NEAR(true_total_slope(Setting::S2, 0), -2.31 * std::log(16.0) / 3.0, 1e-15);
}

TEST(TrueTotalSlope, QuadratureAgreesWithClosedForm) {
  for (auto s : kAllSettings)
    for (ArmId arm : {0, 1})
      EXPECT_NEAR(true_arm_slope(s, arm, EstimandSpec::total(3.0)), true_total_slope(s, arm), 1e-6);
}

TEST(TrueEffect, Values) {
  EXPECT_NEAR(true_effect(Setting::S1, EstimandSpec::total(3.0)), 0.75, 1e-12);
  EXPECT_NEAR(true_effect(Setting::S4, EstimandSpec::total(3.0)), 1.25, 1e-12);
  EXPECT_NEAR(true_effect(Setting::S3, EstimandSpec::chronic(0.5, 3.0)), 1.25, 1e-12);
  EXPECT_NEAR(true_effect(Setting::S2, EstimandSpec::total(3.0)), 0.81 * std::log(16.0) / 3.0, 1e-10);
}

TEST(TrajectorySpec, ParametersAreValid) {
  for (auto s : kAllSettings)
    for (ArmId arm : {0, 1}) EXPECT_NO_THROW(trajectory_spec(s, arm).validate());
  EXPECT_THROW(trajectory_spec(Setting::S1, 2), Error);
  EXPECT_THROW(setting_from_number(5), Error);
}
