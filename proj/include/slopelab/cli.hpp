#pragma once

// Subcommands behind the `slopelab` executable. Each cmd_* takes its
// arguments (without the subcommand name) and the output/log streams and
// returns the process exit code, so tests drive them in-process.
//
// Needs CLI11.hpp and json.hpp on the include path.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "slopelab/csv.hpp"
#include "slopelab/estimators.hpp"
#include "slopelab/mcstudy.hpp"
#include "slopelab/simgen.hpp"
#include "slopelab/trajectories.hpp"

namespace slopelab::cli {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kFormatVersion = "1";

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConvergence = 3;

using Json = nlohmann::ordered_json;

/// Writes to a sibling temporary file and renames it over `path`.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::ParseError, "cannot open " + tmp.string() + " for writing");
    f << content;
    f.flush();
    if (!f) {
      std::filesystem::remove(tmp);
      throw Error(ErrorCode::ParseError, "write failed for " + path.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

inline void emit(const std::optional<std::string>& path, const std::string& content, std::ostream& out) {
  if (path)
    write_atomic(*path, content);
  else
    out << content;
}

inline std::optional<CensoringScheme> censoring_from_name(std::string_view name) {
  if (name == "none") return CensoringScheme::none();
  if (name == "discrete") return CensoringScheme::discrete();
  if (name == "continuous") return CensoringScheme::continuous();
  return std::nullopt;
}

inline std::string censoring_name(const CensoringScheme& c) {
  switch (c.kind) {
    case CensoringKind::None: return "none";
    case CensoringKind::DiscreteUniformGrid: return "discrete";
    case CensoringKind::ContinuousUniform: return "continuous";
  }
  return "none";
}

namespace detail {

/// Parses `args` with CLI11; returns an exit code when parsing ends the command.
inline std::optional<int> parse(CLI::App& app, std::vector<std::string> args, std::ostream& out,
                                std::ostream& err) {
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << app.get_name() << ": " << e.what() << '\n';
    return kExitUsage;
  }
  return std::nullopt;
}

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  std::string s = buf;
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);  // no "-0.00"
  return s;
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

inline int cmd_generate(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulate one trial dataset as CSV", "generate"};
  int setting = 0;
  int n_per_arm = 200;
  std::uint64_t seed = 1;
  std::string censoring = "discrete";
  std::optional<std::string> out_path;
  app.add_option("--setting", setting, "Simulation setting 1-4")->required();
  app.add_option("--n-per-arm", n_per_arm, "Subjects per arm");
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--censoring", censoring, "none, discrete or continuous");
  app.add_option("--out", out_path, "Output file (stdout when absent)");
  if (auto rc = detail::parse(app, args, out, err)) return *rc;

  if (setting < 1 || setting > 4) {
    err << "generate: --setting must be 1, 2, 3 or 4\n";
    return kExitUsage;
  }
  auto scheme = censoring_from_name(censoring);
  if (!scheme) {
    err << "generate: --censoring must be none, discrete or continuous\n";
    return kExitUsage;
  }
  try {
    GenConfig cfg;
    cfg.setting = setting_from_number(setting);
    cfg.n_per_arm = n_per_arm;
    cfg.seed = seed;
    cfg.censoring = *scheme;
    std::ostringstream buf;
    csv::write_dataset(buf, generate(cfg));
    emit(out_path, buf.str(), out);
  } catch (const Error& e) {
    err << "generate: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "generate: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}

inline int cmd_fit(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fit one estimator to a dataset and report slope contrasts", "fit"};
  std::string data_path, method_name_arg;
  std::optional<double> tau0, t1, t2;
  std::optional<int> arm;
  std::vector<double> candidates;
  bool mmrm_literal = false;
  bool separate_baseline = false;
  app.add_option("--data", data_path, "Dataset CSV")->required();
  app.add_option("--method", method_name_arg, "lm, lme, two-slope, two-stage or mmrm")->required();
  app.add_option("--tau0", tau0, "Change-point in years (two-slope)");
  app.add_option("--tau0-candidates", candidates, "Change-points to choose from by AIC (two-slope)")
      ->delimiter(',');
  app.add_option("--t1", t1, "Interval start in years (default 0)");
  app.add_option("--t2", t2, "Interval end in years (default last visit)");
  app.add_option("--arm", arm, "Target arm (default every non-reference arm)");
  app.add_flag("--mmrm-literal", mmrm_literal, "MMRM interval contrast as a difference of total slopes");
  app.add_flag("--mmrm-separate-baseline", separate_baseline, "MMRM with per-arm baseline means");
  if (auto rc = detail::parse(app, args, out, err)) return *rc;

  const auto method = method_from_name(method_name_arg);
  if (!method) {
    err << "fit: unknown --method '" << method_name_arg << "'\n";
    return kExitUsage;
  }
  if (*method == Method::TwoSlopeLME && !tau0 && candidates.empty()) {
    err << "fit: --method two-slope requires --tau0 or --tau0-candidates\n";
    return kExitUsage;
  }
  if (!candidates.empty() && *method != Method::TwoSlopeLME) {
    err << "fit: --tau0-candidates applies only to --method two-slope\n";
    return kExitUsage;
  }
  if (t1 && !t2) {
    err << "fit: --t1 requires --t2\n";
    return kExitUsage;
  }

  std::ifstream in(data_path, std::ios::binary);
  if (!in) {
    err << "fit: cannot open " << data_path << '\n';
    return kExitUsage;
  }

  FitResult fit;
  try {
    const auto ds = csv::read_dataset(in);
    FitOptions opt;
    opt.tau0 = tau0;
    opt.mmrm_separate_baseline = separate_baseline;
    if (!candidates.empty()) {
      auto sel = select_changepoint_aic(ds, candidates, opt.optimizer);
      err << "fit: selected tau0 = " << csv::format_double(sel.tau0) << " by AIC\n";
      fit = std::move(sel.fit);
    } else {
      fit = fit_method(ds, *method, opt);
    }
  } catch (const Error& e) {
    err << "fit: " << e.what() << '\n';
    return e.code() == ErrorCode::NoConvergence ? kExitConvergence : kExitUsage;
  }

  std::vector<ArmId> targets;
  if (arm) {
    if (*arm <= kReferenceArm || *arm >= fit.n_arms) {
      err << "fit: InvalidArm: --arm must name a non-reference arm of the dataset\n";
      return kExitUsage;
    }
    targets.push_back(*arm);
  } else {
    for (ArmId a = 1; a < fit.n_arms; ++a) targets.push_back(a);
  }

  std::ostringstream rows;
  rows << "method,arm,slope,se,ref_slope,ref_se,diff,diff_se,ci_low,ci_high,converged\n";
  try {
    const double lo = t1.value_or(0.0);
    const double hi = t2.value_or(fit.grid.empty() ? kStudyHorizon : fit.grid.back());
    const auto spec = EstimandSpec::classify(lo, hi, fit.tau0);
    for (ArmId a : targets) {
      ContrastOptions copt;
      copt.target_arm = a;
      copt.mmrm_literal = mmrm_literal;
      const auto est = slope_contrast(fit, spec, copt);
      const auto* s = est.slope_for(a);
      const auto* r = est.slope_for(kReferenceArm);
      rows << method_name(fit.method) << ',' << a << ',' << fmt_num(s->estimate) << ',' << fmt_num(s->se) << ','
           << fmt_num(r->estimate) << ',' << fmt_num(r->se) << ',' << fmt_num(est.estimate) << ','
           << fmt_num(est.se) << ',' << fmt_num(est.ci_low) << ',' << fmt_num(est.ci_high) << ','
           << (fit.converged() ? "true" : "false") << '\n';
    }
  } catch (const Error& e) {
    err << "fit: " << e.what() << '\n';
    return kExitUsage;
  }
  out << rows.str();
  if (!fit.converged()) {
    err << "fit: NoConvergence: optimizer did not reach a stationary point\n";
    return kExitConvergence;
  }
  return kExitOk;
}

inline constexpr std::array<const char*, 10> kStudyKeys{"settings", "methods", "n_per_arm", "n_reps", "master_seed",
                                                        "censoring", "tau0", "t1", "t2", "workers"};

/// Reads a study config (or a manifest's embedded config). Every offending
/// key is collected before failing.
inline StudyConfig parse_study_config(const Json& doc, std::vector<std::string>& bad) {
  StudyConfig cfg;
  const Json* src = &doc;
  if (doc.is_object() && doc.contains("config") && doc.contains("tool")) src = &doc["config"];
  if (!src->is_object()) {
    bad.push_back("<root>");
    return cfg;
  }
  for (const auto& [key, _] : src->items())
    if (std::find_if(kStudyKeys.begin(), kStudyKeys.end(), [&](const char* k) { return key == k; }) ==
        kStudyKeys.end())
      bad.push_back(key);

  const auto& c = *src;
  auto positive_int = [&](const char* key, int min, int& dst) {
    if (!c.contains(key)) return;
    if (!c[key].is_number_integer() || c[key].get<long long>() < min || c[key].get<long long>() > 100000000)
      bad.push_back(key);
    else
      dst = c[key].get<int>();
  };
  if (c.contains("settings")) {
    std::vector<Setting> v;
    bool ok = c["settings"].is_array() && !c["settings"].empty();
    if (ok)
      for (const auto& s : c["settings"]) {
        if (!s.is_number_integer() || s.get<long long>() < 1 || s.get<long long>() > 4) {
          ok = false;
          break;
        }
        v.push_back(setting_from_number(s.get<int>()));
      }
    if (ok)
      cfg.settings = v;
    else
      bad.push_back("settings");
  }
  if (c.contains("methods")) {
    std::vector<Method> v;
    bool ok = c["methods"].is_array() && !c["methods"].empty();
    if (ok)
      for (const auto& m : c["methods"]) {
        auto parsed = m.is_string() ? method_from_name(m.get<std::string>()) : std::nullopt;
        if (!parsed) {
          ok = false;
          break;
        }
        v.push_back(*parsed);
      }
    if (ok)
      cfg.methods = v;
    else
      bad.push_back("methods");
  }
  positive_int("n_per_arm", 1, cfg.n_per_arm);
  positive_int("n_reps", 2, cfg.n_reps);
  positive_int("workers", 1, cfg.workers);
  if (c.contains("master_seed")) {
    if (c["master_seed"].is_number_unsigned() ||
        (c["master_seed"].is_number_integer() && c["master_seed"].get<long long>() >= 0))
      cfg.master_seed = c["master_seed"].get<std::uint64_t>();
    else
      bad.push_back("master_seed");
  }
  if (c.contains("censoring")) {
    auto scheme = c["censoring"].is_string() ? censoring_from_name(c["censoring"].get<std::string>()) : std::nullopt;
    if (scheme)
      cfg.censoring = *scheme;
    else
      bad.push_back("censoring");
  }
  if (c.contains("tau0")) {
    if (c["tau0"].is_number() && c["tau0"].get<double>() > 0.0 && c["tau0"].get<double>() < kStudyHorizon)
      cfg.tau0 = c["tau0"].get<double>();
    else
      bad.push_back("tau0");
  }
  double t1 = 0.0, t2 = kStudyHorizon;
  bool interval_ok = true;
  for (const char* key : {"t1", "t2"}) {
    if (!c.contains(key)) continue;
    if (!c[key].is_number()) {
      bad.push_back(key);
      interval_ok = false;
      continue;
    }
    (std::string(key) == "t1" ? t1 : t2) = c[key].get<double>();
  }
  if (interval_ok) {
    if (t1 < 0.0 || !(t1 < t2) || t2 > kStudyHorizon) {
      bad.push_back("t1");
      bad.push_back("t2");
    } else {
      cfg.estimand = EstimandSpec::classify(t1, t2, cfg.tau0);
    }
  }
  return cfg;
}

inline Json study_config_json(const StudyConfig& cfg) {
  Json j;
  j["settings"] = Json::array();
  for (auto s : cfg.settings) j["settings"].push_back(setting_number(s));
  j["methods"] = Json::array();
  for (auto m : cfg.methods) j["methods"].push_back(std::string(method_name(m)));
  j["n_per_arm"] = cfg.n_per_arm;
  j["n_reps"] = cfg.n_reps;
  j["master_seed"] = cfg.master_seed;
  j["censoring"] = censoring_name(cfg.censoring);
  j["tau0"] = cfg.tau0;
  j["t1"] = cfg.estimand.t1;
  j["t2"] = cfg.estimand.t2;
  j["workers"] = cfg.workers;
  return j;
}

inline int cmd_study(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Run the Monte Carlo study described by a JSON config", "study"};
  std::string config_path;
  std::optional<std::string> out_path, manifest_path, dump_path;
  bool quiet = false;
  app.add_option("--config", config_path, "Study config or a previous run manifest (JSON)")->required();
  app.add_option("--out", out_path, "Summary CSV (stdout when absent)");
  app.add_option("--manifest", manifest_path, "Run manifest (default <out>.manifest.json)");
  app.add_option("--dump", dump_path, "Per-replicate CSV");
  app.add_flag("--quiet", quiet, "No progress log");
  if (auto rc = detail::parse(app, args, out, err)) return *rc;

  std::ifstream in(config_path);
  if (!in) {
    err << "study: cannot open " << config_path << '\n';
    return kExitUsage;
  }
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::exception& e) {
    err << "study: invalid JSON in " << config_path << ": " << e.what() << '\n';
    return kExitUsage;
  }
  std::vector<std::string> bad;
  auto cfg = parse_study_config(doc, bad);
  if (const char* env = std::getenv("SLOPELAB_WORKERS"); env && *env) {
    char* end = nullptr;
    const long w = std::strtol(env, &end, 10);
    if (*end != '\0' || w < 1 || w > 4096)
      bad.push_back("SLOPELAB_WORKERS");
    else
      cfg.workers = static_cast<int>(w);
  }
  if (!bad.empty()) {
    err << "study: invalid config keys:";
    for (const auto& k : bad) err << ' ' << k;
    err << '\n';
    return kExitUsage;
  }
  if (!manifest_path && out_path) manifest_path = *out_path + ".manifest.json";

  const auto started = detail::utc_now();
  const std::size_t step = std::max<std::size_t>(1, cfg.settings.size() * cfg.n_reps / 20);
  ProgressFn progress;
  if (!quiet)
    progress = [&](std::size_t done, std::size_t total) {
      if (done % step == 0 || done == total) err << "study: " << done << '/' << total << " replicates\n";
    };
  StudySummary summary;
  try {
    summary = run_study(cfg, progress);
  } catch (const Error& e) {
    err << "study: " << e.what() << '\n';
    return kExitUsage;
  }
  const auto finished = detail::utc_now();

  Json manifest;
  manifest["tool"] = "slopelab";
  manifest["version"] = kToolVersion;
  manifest["format_version"] = kFormatVersion;
  manifest["config"] = study_config_json(cfg);
  manifest["master_seed"] = cfg.master_seed;
  manifest["started_at"] = started;
  manifest["finished_at"] = finished;
  manifest["rows"] = Json::array();
  for (const auto& r : summary.rows) {
    manifest["rows"].push_back({{"setting", setting_number(r.setting)},
                                {"method", std::string(method_name(r.method))},
                                {"n_fail", r.n_fail},
                                {"flagged", r.flagged()}});
    if (r.flagged())
      err << "study: setting " << setting_number(r.setting) << ' ' << method_name(r.method) << " failed in "
          << r.n_fail << " of " << r.n_reps << " replicates\n";
  }

  try {
    std::ostringstream csv_out;
    write_summary_csv(csv_out, summary);
    emit(out_path, csv_out.str(), out);
    if (dump_path) {
      std::ostringstream dump;
      write_replicates_csv(dump, summary);
      write_atomic(*dump_path, dump.str());
    }
    if (manifest_path)
      write_atomic(*manifest_path, manifest.dump(2) + "\n");
    else
      err << manifest.dump(2) << '\n';
  } catch (const std::exception& e) {
    err << "study: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}

inline int cmd_truth(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Print true average slopes per setting", "truth"};
  double t1 = 0.0, t2 = kStudyHorizon;
  int digits = 2;
  app.add_option("--t1", t1, "Interval start in years");
  app.add_option("--t2", t2, "Interval end in years");
  app.add_option("--digits", digits, "Decimal places")->check(CLI::Range(0, 15));
  if (auto rc = detail::parse(app, args, out, err)) return *rc;

  if (!std::isfinite(t1) || !std::isfinite(t2) || t1 < 0.0 || !(t1 < t2) || t2 > kStudyHorizon) {
    err << "truth: interval must satisfy 0 <= t1 < t2 <= 3\n";
    return kExitUsage;
  }
  const auto spec = EstimandSpec::interval(t1, t2);
  out << "setting,arm_slope_trt,arm_slope_ctl,difference\n";
  for (auto s : kAllSettings) {
    const double trt = true_arm_slope(s, 1, spec);
    const double ctl = true_arm_slope(s, 0, spec);
    out << setting_number(s) << ',' << detail::fixed(trt, digits) << ',' << detail::fixed(ctl, digits) << ','
        << detail::fixed(trt - ctl, digits) << '\n';
  }
  return kExitOk;
}

inline std::string usage() {
  return "usage: slopelab <command> [options]\n"
         "commands:\n"
         "  generate   simulate a dataset (CSV)\n"
         "  fit        fit an estimator to a dataset\n"
         "  study      run a Monte Carlo study from a JSON config\n"
         "  truth      print true average slopes\n"
         "  --version  print version\n";
}

inline int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  if (argv.empty() || argv[0] == "-h" || argv[0] == "--help") {
    (argv.empty() ? err : out) << usage();
    return argv.empty() ? kExitUsage : kExitOk;
  }
  if (argv[0] == "--version") {
    out << "slopelab " << kToolVersion << " (format " << kFormatVersion << ")\n";
    return kExitOk;
  }
  const std::vector<std::string> rest(argv.begin() + 1, argv.end());
  if (argv[0] == "generate") return cmd_generate(rest, out, err);
  if (argv[0] == "fit") return cmd_fit(rest, out, err);
  if (argv[0] == "study") return cmd_study(rest, out, err);
  if (argv[0] == "truth") return cmd_truth(rest, out, err);
  err << "slopelab: unknown command '" << argv[0] << "'\n" << usage();
  return kExitUsage;
}

}  // namespace slopelab::cli
