#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slopelab/error.hpp"

namespace slopelab {

/// Arm label. 0 is the reference (control) arm; active arms are 1..K-1.
using ArmId = int;

inline constexpr ArmId kReferenceArm = 0;

/// Two-sided 95% normal quantile used for every reported interval.
inline constexpr double kZ975 = 1.96;

struct Arm {
  ArmId id = kReferenceArm;
  std::string name;
};

/// One eGFR observation. Time is in years since randomization.
struct Measurement {
  std::string subject_id;
  ArmId arm = kReferenceArm;
  double time = 0.0;
  double egfr = 0.0;

  friend bool operator==(const Measurement&, const Measurement&) = default;
};

class LongitudinalDataset;

/// Contiguous run of one subject's measurements inside a dataset.
struct Subject {
  std::string id;
  ArmId arm = kReferenceArm;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
};

/// Validated, immutable collection of repeated measurements. Instances are
/// only produced by build_dataset, which enforces the invariants.
class LongitudinalDataset {
 public:
  const std::vector<Measurement>& measurements() const { return measurements_; }
  const std::vector<Arm>& arms() const { return arms_; }
  const std::vector<double>& grid() const { return grid_; }
  const std::vector<Subject>& subjects() const { return subjects_; }

  int n_arms() const { return static_cast<int>(arms_.size()); }
  std::size_t n_subjects() const { return subjects_.size(); }
  std::size_t size() const { return measurements_.size(); }

  std::span<const Measurement> rows(const Subject& s) const {
    return std::span<const Measurement>(measurements_).subspan(s.begin, s.size());
  }

  friend bool operator==(const LongitudinalDataset& a, const LongitudinalDataset& b) {
    if (a.measurements_ != b.measurements_ || a.grid_ != b.grid_ || a.arms_.size() != b.arms_.size())
      return false;
    for (std::size_t i = 0; i < a.arms_.size(); ++i)
      if (a.arms_[i].id != b.arms_[i].id || a.arms_[i].name != b.arms_[i].name) return false;
    return true;
  }

 private:
  friend LongitudinalDataset build_dataset(std::vector<Measurement>,
                                           const std::map<ArmId, std::string>&);

  std::vector<Measurement> measurements_;
  std::vector<Arm> arms_;
  std::vector<double> grid_;
  std::vector<Subject> subjects_;
};

/// Validates records and assembles a dataset sorted by (subject_id, time).
inline LongitudinalDataset build_dataset(std::vector<Measurement> records,
                                         const std::map<ArmId, std::string>& arm_names = {}) {
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "no measurements");

  for (const auto& m : records) {
    if (!std::isfinite(m.time) || !std::isfinite(m.egfr))
      throw Error(ErrorCode::NonFiniteValue, "subject " + m.subject_id);
    if (m.time < 0.0)
      throw Error(ErrorCode::DomainError, "negative time for subject " + m.subject_id);
    if (m.arm < 0) throw Error(ErrorCode::InvalidArm, "negative arm for subject " + m.subject_id);
  }

  std::stable_sort(records.begin(), records.end(), [](const Measurement& a, const Measurement& b) {
    if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
    return a.time < b.time;
  });

  LongitudinalDataset ds;
  std::vector<bool> arm_seen;
  for (std::size_t i = 0; i < records.size();) {
    std::size_t j = i;
    const auto& first = records[i];
    while (j < records.size() && records[j].subject_id == first.subject_id) {
      if (records[j].arm != first.arm)
        throw Error(ErrorCode::InconsistentArm, "subject " + first.subject_id);
      if (j > i && records[j].time == records[j - 1].time)
        throw Error(ErrorCode::DuplicateTimePoint, "subject " + first.subject_id);
      ++j;
    }
    if (first.time != 0.0) throw Error(ErrorCode::MissingBaseline, "subject " + first.subject_id);
    ds.subjects_.push_back(Subject{first.subject_id, first.arm, i, j});
    if (static_cast<std::size_t>(first.arm) >= arm_seen.size()) arm_seen.resize(first.arm + 1, false);
    arm_seen[first.arm] = true;
    i = j;
  }

  for (std::size_t a = 0; a < arm_seen.size(); ++a) {
    if (!arm_seen[a])
      throw Error(ErrorCode::InvalidArm, "arm ids must be dense from 0; missing " + std::to_string(a));
    auto it = arm_names.find(static_cast<ArmId>(a));
    ds.arms_.push_back(Arm{static_cast<ArmId>(a), it == arm_names.end() ? std::string{} : it->second});
  }

  for (const auto& m : records) ds.grid_.push_back(m.time);
  std::sort(ds.grid_.begin(), ds.grid_.end());
  ds.grid_.erase(std::unique(ds.grid_.begin(), ds.grid_.end()), ds.grid_.end());

  ds.measurements_ = std::move(records);
  return ds;
}

/// Sorted distinct visit times; always starts at 0.
inline std::vector<double> visit_grid(const LongitudinalDataset& dataset) { return dataset.grid(); }

enum class WeightKind { Uniform };

enum class EstimandKind { Total, Chronic, Acute, Interval };

/// Interval [t1, t2] over which the arm-wise average slope is compared.
struct EstimandSpec {
  double t1 = 0.0;
  double t2 = 3.0;
  WeightKind weight = WeightKind::Uniform;
  EstimandKind kind = EstimandKind::Total;

  static EstimandSpec total(double tau) { return make(0.0, tau, EstimandKind::Total); }
  static EstimandSpec chronic(double tau0, double tau) { return make(tau0, tau, EstimandKind::Chronic); }
  static EstimandSpec acute(double tau0) { return make(0.0, tau0, EstimandKind::Acute); }
  static EstimandSpec interval(double t1, double t2) { return make(t1, t2, EstimandKind::Interval); }

  /// Picks the most specific kind for [t1, t2] given an optional change-point.
  static EstimandSpec classify(double t1, double t2, std::optional<double> tau0 = std::nullopt) {
    if (t1 == 0.0) {
      if (tau0 && t2 == *tau0) return acute(t2);
      return total(t2);
    }
    if (tau0 && t1 == *tau0) return chronic(t1, t2);
    return interval(t1, t2);
  }

  void validate() const {
    if (!std::isfinite(t1) || !std::isfinite(t2) || t1 < 0.0 || !(t1 < t2))
      throw Error(ErrorCode::DomainError, "estimand interval requires 0 <= t1 < t2");
    if ((kind == EstimandKind::Total || kind == EstimandKind::Acute) && t1 != 0.0)
      throw Error(ErrorCode::DomainError, "total/acute slope must start at 0");
    if (kind == EstimandKind::Chronic && !(t1 > 0.0))
      throw Error(ErrorCode::DomainError, "chronic slope must start at tau0 > 0");
  }

  double length() const { return t2 - t1; }

 private:
  static EstimandSpec make(double t1, double t2, EstimandKind kind) {
    EstimandSpec s;
    s.t1 = t1;
    s.t2 = t2;
    s.kind = kind;
    s.validate();
    return s;
  }
};

struct ArmSlope {
  ArmId arm = kReferenceArm;
  double estimate = 0.0;
  double se = 0.0;
};

/// Contrast of interval-average slopes, target arm minus reference arm.
struct SlopeEstimate {
  ArmId target_arm = 1;
  ArmId reference_arm = kReferenceArm;
  double estimate = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::vector<ArmSlope> arm_slopes;

  double ci_half_width() const { return kZ975 * se; }

  const ArmSlope* slope_for(ArmId arm) const {
    for (const auto& s : arm_slopes)
      if (s.arm == arm) return &s;
    return nullptr;
  }
};

}  // namespace slopelab
