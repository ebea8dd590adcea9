#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "slopelab/estimators.hpp"
#include "slopelab/rng.hpp"
#include "slopelab/simgen.hpp"
#include "slopelab/trajectories.hpp"

namespace slopelab {

struct StudyConfig {
  std::vector<Setting> settings{kAllSettings.begin(), kAllSettings.end()};
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  int n_per_arm = 200;
  int n_reps = 2000;
  std::uint64_t master_seed = 20250101;
  CensoringScheme censoring = CensoringScheme::discrete();
  EstimandSpec estimand = EstimandSpec::total(kStudyHorizon);
  double tau0 = 0.5;
  int workers = 1;

  void validate() const {
    if (settings.empty()) throw Error(ErrorCode::InvalidConfig, "no settings selected");
    if (methods.empty()) throw Error(ErrorCode::InvalidConfig, "no methods selected");
    if (n_per_arm < 1) throw Error(ErrorCode::InvalidConfig, "n_per_arm must be >= 1");
    if (n_reps < 2) throw Error(ErrorCode::InvalidConfig, "n_reps must be >= 2");
    if (workers < 1) throw Error(ErrorCode::InvalidConfig, "workers must be >= 1");
    if (!(tau0 > 0.0 && tau0 < kStudyHorizon)) throw Error(ErrorCode::InvalidConfig, "tau0 must lie in (0, 3)");
    estimand.validate();
    if (estimand.t2 > kStudyHorizon) throw Error(ErrorCode::InvalidConfig, "t2 exceeds the study horizon");
  }
};

/// One method's result on one replicate dataset.
struct MethodOutcome {
  Method method = Method::LM;
  std::optional<SlopeEstimate> estimate;
  bool converged = false;
  std::string error;

  bool ok() const { return estimate.has_value() && converged; }
};

struct ReplicateOptions {
  int n_per_arm = 200;
  CensoringScheme censoring = CensoringScheme::discrete();
  double random_effect_scale = 1.0;
  double residual_scale = 1.0;
};

/// Generates and censors one dataset, then fits every requested method on it.
/// Failures are captured per method and never thrown.
inline std::vector<MethodOutcome> run_replicate(Setting setting, std::span<const Method> methods, double tau0,
                                                const EstimandSpec& estimand, std::uint64_t rep_seed,
                                                const ReplicateOptions& ropt = {}) {
  GenConfig gen;
  gen.setting = setting;
  gen.n_per_arm = ropt.n_per_arm;
  gen.seed = rep_seed;
  gen.censoring = ropt.censoring;
  gen.random_effect_scale = ropt.random_effect_scale;
  gen.residual_scale = ropt.residual_scale;
  const auto ds = generate(gen);

  FitOptions fopt;
  fopt.tau0 = tau0;
  std::vector<MethodOutcome> out;
  out.reserve(methods.size());
  for (Method m : methods) {
    MethodOutcome o;
    o.method = m;
    try {
      auto fit = fit_method(ds, m, fopt);
      o.converged = fit.converged();
      o.estimate = slope_contrast(fit, estimand);
      if (!o.converged) o.error = "NoConvergence";
    } catch (const Error& e) {
      o.error = std::string(e.name());
    }
    out.push_back(std::move(o));
  }
  return out;
}

/// Aggregates of one (setting, method) cell over replicates.
struct MetricsRow {
  int n = 0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double sd = 0.0;
  double rmse = 0.0;
  double mean_se = std::numeric_limits<double>::quiet_NaN();
  double coverage95 = std::numeric_limits<double>::quiet_NaN();
};

/// bias = mean - truth; sd uses divisor n - 1; rmse = sqrt(mean((est - truth)^2)).
inline MetricsRow summarize(std::span<const double> estimates, double truth) {
  if (estimates.size() < 2) throw Error(ErrorCode::TooFewEstimates, "need at least two estimates");
  MetricsRow r;
  r.n = static_cast<int>(estimates.size());
  double sum = 0.0;
  for (double e : estimates) sum += e;
  r.mean_estimate = sum / r.n;
  double ss = 0.0, sq_err = 0.0;
  for (double e : estimates) {
    ss += (e - r.mean_estimate) * (e - r.mean_estimate);
    sq_err += (e - truth) * (e - truth);
  }
  r.bias = r.mean_estimate - truth;
  r.sd = std::sqrt(ss / (r.n - 1));
  r.rmse = std::sqrt(sq_err / r.n);
  return r;
}

/// As above, plus mean standard error and 95% interval coverage of truth.
inline MetricsRow summarize(std::span<const SlopeEstimate> estimates, double truth) {
  std::vector<double> values;
  values.reserve(estimates.size());
  for (const auto& e : estimates) values.push_back(e.estimate);
  auto r = summarize(values, truth);
  double se_sum = 0.0;
  int covered = 0;
  for (const auto& e : estimates) {
    se_sum += e.se;
    covered += (e.ci_low <= truth && truth <= e.ci_high) ? 1 : 0;
  }
  r.mean_se = se_sum / r.n;
  r.coverage95 = static_cast<double>(covered) / r.n;
  return r;
}

struct StudyRow {
  Setting setting = Setting::S1;
  Method method = Method::LM;
  int n_reps = 0;
  int n_fail = 0;
  double truth = 0.0;
  MetricsRow metrics;

  /// More than 1% of replicates failed for this cell.
  bool flagged() const { return n_fail * 100 > n_reps; }
};

struct ReplicateRecord {
  Setting setting = Setting::S1;
  Method method = Method::LM;
  int rep = 0;
  double estimate = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
};

struct StudySummary {
  std::vector<StudyRow> rows;
  std::vector<ReplicateRecord> replicates;

  const StudyRow* find(Setting s, Method m) const {
    for (const auto& r : rows)
      if (r.setting == s && r.method == m) return &r;
    return nullptr;
  }
};

inline std::uint64_t replicate_seed(std::uint64_t master_seed, Setting setting, int rep) {
  return rng::derive_seed(master_seed, {static_cast<std::uint64_t>(setting_number(setting)),
                                        static_cast<std::uint64_t>(rep)});
}

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

/// Runs every (setting, replicate) job on `workers` threads. Each job is a
/// pure function of its derived seed and results are reduced in replicate
/// order, so the summary does not depend on the worker count.
inline StudySummary run_study(const StudyConfig& cfg, const ProgressFn& progress = {}) {
  cfg.validate();
  const std::size_t n_settings = cfg.settings.size();
  const std::size_t total = n_settings * static_cast<std::size_t>(cfg.n_reps);
  std::vector<std::vector<MethodOutcome>> results(total);
  ReplicateOptions ropt{cfg.n_per_arm, cfg.censoring, 1.0, 1.0};

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t job = next.fetch_add(1);
      if (job >= total) return;
      const Setting s = cfg.settings[job / cfg.n_reps];
      const int rep = static_cast<int>(job % cfg.n_reps);
      results[job] = run_replicate(s, cfg.methods, cfg.tau0, cfg.estimand,
                                   replicate_seed(cfg.master_seed, s, rep), ropt);
      const std::size_t d = done.fetch_add(1) + 1;
      if (progress && cfg.workers == 1) progress(d, total);
    }
  };
  if (cfg.workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < cfg.workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (progress) progress(total, total);
  }

  StudySummary summary;
  for (std::size_t si = 0; si < n_settings; ++si) {
    const Setting s = cfg.settings[si];
    const double truth = true_effect(s, cfg.estimand);
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
      std::vector<SlopeEstimate> ok;
      StudyRow row;
      row.setting = s;
      row.method = cfg.methods[mi];
      row.n_reps = cfg.n_reps;
      row.truth = truth;
      for (int rep = 0; rep < cfg.n_reps; ++rep) {
        const auto& o = results[si * cfg.n_reps + rep][mi];
        ReplicateRecord rec{s, o.method, rep};
        if (o.estimate) {
          rec.estimate = o.estimate->estimate;
          rec.se = o.estimate->se;
        }
        rec.converged = o.ok();
        summary.replicates.push_back(rec);
        if (o.ok())
          ok.push_back(*o.estimate);
        else
          ++row.n_fail;
      }
      try {
        row.metrics = summarize(ok, truth);
      } catch (const Error&) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.metrics = MetricsRow{static_cast<int>(ok.size()), nan, nan, nan, nan, nan, nan};
      }
      summary.rows.push_back(row);
    }
  }
  return summary;
}

inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "NA";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline void write_summary_csv(std::ostream& out, const StudySummary& s) {
  out << "setting,method,n_reps,n_fail,mean_est,truth,bias,sd,rmse,mean_se,coverage95\n";
  for (const auto& r : s.rows)
    out << setting_number(r.setting) << ',' << method_name(r.method) << ',' << r.n_reps << ',' << r.n_fail << ','
        << fmt_num(r.metrics.mean_estimate) << ',' << fmt_num(r.truth) << ',' << fmt_num(r.metrics.bias) << ','
        << fmt_num(r.metrics.sd) << ',' << fmt_num(r.metrics.rmse) << ',' << fmt_num(r.metrics.mean_se) << ','
        << fmt_num(r.metrics.coverage95) << '\n';
}

inline void write_replicates_csv(std::ostream& out, const StudySummary& s) {
  out << "setting,method,rep,estimate,se,converged\n";
  for (const auto& r : s.replicates)
    out << setting_number(r.setting) << ',' << method_name(r.method) << ',' << r.rep << ',' << fmt_num(r.estimate)
        << ',' << fmt_num(r.se) << ',' << (r.converged ? "true" : "false") << '\n';
}

}  // namespace slopelab
