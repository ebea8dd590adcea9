#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "slopelab/core.hpp"
#include "slopelab/rng.hpp"
#include "slopelab/trajectories.hpp"

namespace slopelab {

enum class CensoringKind { None, DiscreteUniformGrid, ContinuousUniform };

/// Independent administrative censoring: C ~ Uniform[lower, upper], either
/// continuous or restricted to the visit-grid atoms inside [lower, upper].
struct CensoringScheme {
  CensoringKind kind = CensoringKind::DiscreteUniformGrid;
  double lower = 0.5;
  double upper = 3.0;

  static CensoringScheme none() { return {CensoringKind::None, 0.5, 3.0}; }
  static CensoringScheme discrete() { return {CensoringKind::DiscreteUniformGrid, 0.5, 3.0}; }
  static CensoringScheme continuous() { return {CensoringKind::ContinuousUniform, 0.5, 3.0}; }
};

inline std::vector<double> default_visit_times() { return {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0}; }

struct GenConfig {
  Setting setting = Setting::S1;
  int n_per_arm = 200;
  std::vector<double> visit_times = default_visit_times();
  std::uint64_t seed = 1;
  CensoringScheme censoring = CensoringScheme::discrete();
  /// Multiplies every random-effect SD; 0 removes between-subject variation.
  double random_effect_scale = 1.0;
  /// Multiplies the residual SD; 0 removes measurement noise.
  double residual_scale = 1.0;

  void validate() const {
    if (n_per_arm < 1) throw Error(ErrorCode::InvalidConfig, "n_per_arm must be >= 1");
    if (visit_times.empty() || visit_times.front() != 0.0)
      throw Error(ErrorCode::InvalidConfig, "visit times must start at 0");
    for (std::size_t i = 1; i < visit_times.size(); ++i)
      if (!(visit_times[i] > visit_times[i - 1]))
        throw Error(ErrorCode::InvalidConfig, "visit times must be strictly increasing");
    if (visit_times.back() > kStudyHorizon)
      throw Error(ErrorCode::InvalidConfig, "visit times must lie within the study horizon");
    if (!(random_effect_scale >= 0.0) || !(residual_scale >= 0.0))
      throw Error(ErrorCode::InvalidConfig, "variance scales must be >= 0");
    if (censoring.kind != CensoringKind::None && !(censoring.lower <= censoring.upper))
      throw Error(ErrorCode::InvalidConfig, "censoring bounds must satisfy lower <= upper");
  }
};

inline std::string subject_label(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%06zu", index);
  return buf;
}

/// Draws one subject's random effects and noisy observations at every visit.
inline void simulate_subject(const TrajectorySpec& traj, const GenConfig& cfg, std::size_t index,
                             std::vector<Measurement>& out) {
  auto eng = rng::make_engine(rng::derive_seed(cfg.seed, {rng::kSubjectStream, index}));
  std::normal_distribution<double> z;
  const double scale = cfg.random_effect_scale;

  double b0 = 0.0, b1 = 0.0, b2 = 0.0;
  if (traj.shape == TrajectoryShape::Hinge) {
    b0 = scale * traj.random_sds[0] * z(eng);
    b1 = scale * traj.random_sds[1] * z(eng);
    b2 = scale * traj.random_sds[2] * z(eng);
  } else {
    const double z0 = z(eng);
    const double z1 = z(eng);
    const double rho = traj.corr_b0b1;
    b0 = scale * traj.random_sds[0] * z0;
    b1 = scale * traj.random_sds[1] * (rho * z0 + std::sqrt(1.0 - rho * rho) * z1);
  }

  const std::string id = subject_label(index);
  const double sigma = cfg.residual_scale * traj.sigma;
  for (double t : cfg.visit_times) {
    double y = traj.beta0 + b0;
    switch (traj.shape) {
      case TrajectoryShape::Linear: y += (traj.beta1 + b1) * t; break;
      case TrajectoryShape::LogLinear: y += (traj.beta1 + b1) * std::log(5.0 * t + 1.0); break;
      case TrajectoryShape::Hinge:
        y += (traj.beta1 + b1) * t + (traj.beta2 + b2) * std::max(t - *traj.tau0, 0.0);
        break;
    }
    if (sigma > 0.0) y += sigma * z(eng);
    out.push_back(Measurement{id, traj.arm, t, y});
  }
}

/// Retains each subject's measurements with time <= C, C drawn independently
/// per subject from a stream keyed by (seed, subject position).
inline LongitudinalDataset apply_censoring(const LongitudinalDataset& dataset, const CensoringScheme& scheme,
                                           std::uint64_t seed) {
  if (scheme.kind == CensoringKind::None) return dataset;

  std::vector<double> atoms;
  for (double t : dataset.grid())
    if (t >= scheme.lower && t <= scheme.upper) atoms.push_back(t);
  if (scheme.kind == CensoringKind::DiscreteUniformGrid && atoms.empty())
    throw Error(ErrorCode::InvalidConfig, "no visit times inside the censoring bounds");

  std::vector<Measurement> kept;
  kept.reserve(dataset.size());
  const auto& subjects = dataset.subjects();
  for (std::size_t k = 0; k < subjects.size(); ++k) {
    auto eng = rng::make_engine(rng::derive_seed(seed, {rng::kCensorStream, k}));
    double c = 0.0;
    if (scheme.kind == CensoringKind::DiscreteUniformGrid) {
      std::uniform_int_distribution<std::size_t> pick(0, atoms.size() - 1);
      c = atoms[pick(eng)];
    } else {
      std::uniform_real_distribution<double> u(scheme.lower, scheme.upper);
      c = u(eng);
    }
    for (const auto& m : dataset.rows(subjects[k]))
      if (m.time == 0.0 || m.time <= c) kept.push_back(m);
  }
  std::map<ArmId, std::string> names;
  for (const auto& a : dataset.arms()) names[a.id] = a.name;
  return build_dataset(std::move(kept), names);
}

/// Simulates n_per_arm control then n_per_arm treated subjects and applies
/// the configured censoring. Bit-identical for identical configs.
inline LongitudinalDataset generate(const GenConfig& cfg) {
  cfg.validate();
  std::vector<Measurement> rows;
  rows.reserve(2 * static_cast<std::size_t>(cfg.n_per_arm) * cfg.visit_times.size());
  std::size_t index = 0;
  for (ArmId arm : {0, 1}) {
    const auto traj = trajectory_spec(cfg.setting, arm);
    for (int i = 0; i < cfg.n_per_arm; ++i) simulate_subject(traj, cfg, index++, rows);
  }
  auto full = build_dataset(std::move(rows), {{0, "control"}, {1, "treatment"}});
  return apply_censoring(full, cfg.censoring, rng::derive_seed(cfg.seed, {rng::kCensorStream}));
}

}  // namespace slopelab
