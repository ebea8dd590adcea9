#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "slopelab/simgen.hpp"

using namespace slopelab;

namespace {

// Pooled OLS slope of egfr on time within one arm.
double pooled_slope(const LongitudinalDataset& ds, ArmId arm) {
  double n = 0, st = 0, sy = 0, stt = 0, sty = 0;
  for (const auto& m : ds.measurements()) {
    if (m.arm != arm) continue;
    n += 1;
    st += m.time;
    sy += m.egfr;
    stt += m.time * m.time;
    sty += m.time * m.egfr;
  }
  return (sty - st * sy / n) / (stt - st * st / n);
}

std::map<std::string, std::vector<double>> times_by_subject(const LongitudinalDataset& ds) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& m : ds.measurements()) out[m.subject_id].push_back(m.time);
  return out;
}

double correlation(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST(Generate, NoiselessSettingOneIsExact) {
  GenConfig cfg;
  cfg.n_per_arm = 4;
  cfg.random_effect_scale = 0.0;
  cfg.residual_scale = 0.0;
  cfg.censoring = CensoringScheme::none();
  for (const auto& m : generate(cfg).measurements()) {
    const double expected = 47.5 + (m.arm == 0 ? -2.25 : -1.5) * m.time;
    EXPECT_EQ(m.egfr, expected);
  }
}

TEST(Generate, LargeSamplePooledSlopesMatchTruth) {
  GenConfig cfg;
  cfg.n_per_arm = 100000;
  cfg.censoring = CensoringScheme::none();
  cfg.seed = 99;
  auto ds = generate(cfg);
  EXPECT_NEAR(pooled_slope(ds, 0), -2.25, 0.02);
  EXPECT_NEAR(pooled_slope(ds, 1), -1.5, 0.02);
}

TEST(Generate, SameSeedSameDataset) {
  for (auto s : kAllSettings) {
    GenConfig cfg;
    cfg.setting = s;
    cfg.n_per_arm = 25;
    cfg.seed = 1234;
    auto a = generate(cfg);
    auto b = generate(cfg);
    EXPECT_EQ(a.measurements(), b.measurements());
    cfg.seed = 1235;
    EXPECT_NE(generate(cfg).measurements(), a.measurements());
  }
}

TEST(Generate, ArmSizesAreExact) {
  GenConfig cfg;
  cfg.n_per_arm = 37;
  auto ds = generate(cfg);
  std::map<ArmId, int> count;
  for (const auto& s : ds.subjects()) ++count[s.arm];
  EXPECT_EQ(count[0], 37);
  EXPECT_EQ(count[1], 37);
}

TEST(Generate, BaselineVariance) {
  GenConfig cfg;
  cfg.n_per_arm = 20000;
  cfg.censoring = CensoringScheme::none();
  cfg.seed = 3;
  auto ds = generate(cfg);
  double n = 0, s = 0, ss = 0;
  for (const auto& m : ds.measurements())
    if (m.time == 0.0) {
      n += 1;
      s += m.egfr;
      ss += m.egfr * m.egfr;
    }
  const double var = (ss - s * s / n) / (n - 1);
  EXPECT_NEAR(var / (17.5 * 17.5 + 1.0), 1.0, 0.05);
}

TEST(Generate, HingeSettingsUseIndependentEffects) {
  // Treated S3 subjects draw b0 and b1 independently, so with residuals off
  // the baseline value and the early change are uncorrelated.
  GenConfig cfg;
  cfg.setting = Setting::S3;
  cfg.n_per_arm = 20000;
  cfg.censoring = CensoringScheme::none();
  cfg.residual_scale = 0.0;
  auto ds = generate(cfg);
  std::vector<double> base, early;
  for (const auto& subj : ds.subjects()) {
    if (subj.arm != 1) continue;
    auto rows = ds.rows(subj);
    base.push_back(rows[0].egfr);
    early.push_back((rows[1].egfr - rows[0].egfr) / 0.5);
  }
  EXPECT_LT(std::abs(correlation(base, early)), 0.03);
}

TEST(ApplyCensoring, NoneIsIdentity) {
  GenConfig cfg;
  cfg.n_per_arm = 10;
  cfg.censoring = CensoringScheme::none();
  auto ds = generate(cfg);
  auto out = apply_censoring(ds, CensoringScheme::none(), 77);
  EXPECT_EQ(out.measurements(), ds.measurements());
}

TEST(ApplyCensoring, DiscreteLastVisitFrequency) {
  GenConfig cfg;
  cfg.n_per_arm = 15000;
  cfg.seed = 8;
  auto ds = generate(cfg);
  int last_at_three = 0;
  const auto times = times_by_subject(ds);
  for (const auto& [id, t] : times) last_at_three += t.back() == 3.0 ? 1 : 0;
  const double n = static_cast<double>(times.size());
  const double p = last_at_three / n;
  const double se = std::sqrt((1.0 / 6.0) * (5.0 / 6.0) / n);
  EXPECT_NEAR(p, 1.0 / 6.0, 4.0 * se);
}

TEST(ApplyCensoring, ContinuousKeepsFirstFollowUp) {
  GenConfig cfg;
  cfg.n_per_arm = 2000;
  cfg.censoring = CensoringScheme::continuous();
  auto ds = generate(cfg);
  for (const auto& [id, t] : times_by_subject(ds)) {
    ASSERT_GE(t.size(), 2u) << id;
    EXPECT_EQ(t[1], 0.5);
    EXPECT_LT(t.back(), 3.0);
  }
}

TEST(ApplyCensoring, RetainedTimesArePrefixesWithBaseline) {
  const auto grid = default_visit_times();
  for (auto kind : {CensoringScheme::discrete(), CensoringScheme::continuous()}) {
    GenConfig cfg;
    cfg.n_per_arm = 300;
    cfg.censoring = kind;
    for (const auto& [id, t] : times_by_subject(generate(cfg))) {
      ASSERT_FALSE(t.empty());
      EXPECT_EQ(t.front(), 0.0);
      EXPECT_TRUE(std::equal(t.begin(), t.end(), grid.begin())) << id;
    }
  }
}

TEST(ApplyCensoring, IndependentOfRandomSlope) {
  // With residuals off, each subject's slope is recoverable from two visits;
  // censoring time must not correlate with it.
  GenConfig cfg;
  cfg.n_per_arm = 5000;
  cfg.residual_scale = 0.0;
  cfg.seed = 21;
  auto ds = generate(cfg);
  std::vector<double> slope, follow_up;
  for (const auto& subj : ds.subjects()) {
    auto rows = ds.rows(subj);
    slope.push_back((rows[1].egfr - rows[0].egfr) / rows[1].time);
    follow_up.push_back(rows.back().time);
  }
  EXPECT_LT(std::abs(correlation(slope, follow_up)), 0.05);
}

TEST(GenConfig, Validation) {
  GenConfig cfg;
  cfg.n_per_arm = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.n_per_arm = 1;
  cfg.visit_times = {0.5, 1.0};
  EXPECT_THROW(cfg.validate(), Error);
  cfg.visit_times = {0.0, 1.0, 1.0};
  EXPECT_THROW(cfg.validate(), Error);
}
