#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "slopelab/cli.hpp"

namespace fs = std::filesystem;
using namespace slopelab;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> v;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> v;
  std::istringstream in(s);
  for (std::string f; std::getline(in, f, ',');) v.push_back(f);
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("slopelab_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path path(const std::string& name) const { return dir_ / name; }
  void write(const std::string& name, const std::string& content) const { std::ofstream(path(name)) << content; }

  fs::path dir_;
};

class Generate : public TempDir {};
class Fit : public TempDir {};
class Study : public TempDir {};

const char* kSmallConfig = R"({"settings": [1, 2, 3, 4], "methods": ["lm", "lme", "two-slope", "two-stage", "mmrm"],
  "n_per_arm": 40, "n_reps": 4, "master_seed": 11, "workers": 1})";

}  // namespace

TEST(Version, PrintsToolAndFormat) {
  auto r = run({"--version"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "slopelab 0.1.0 (format 1)\n");
}

TEST(Usage, UnknownCommandIsUsageError) {
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(Generate, SmallDatasetHasOneRowPerVisit) {
  auto r = run({"generate", "--setting", "1", "--n-per-arm", "2", "--seed", "5", "--censoring", "none"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto l = lines(r.out);
  ASSERT_EQ(l.size(), 29u);
  EXPECT_EQ(l[0], "subject_id,arm,time_years,egfr");
}

TEST_F(Generate, RerunIsByteIdentical) {
  const std::vector<std::string> args{"generate", "--setting", "3", "--n-per-arm", "20", "--seed", "9"};
  auto a = run(args), b = run(args);
  EXPECT_EQ(a.out, b.out);
  auto c = run({"generate", "--setting", "3", "--n-per-arm", "20", "--seed", "10"});
  EXPECT_NE(a.out, c.out);

  ASSERT_EQ(run({"generate", "--setting", "3", "--n-per-arm", "20", "--seed", "9", "--out", path("d.csv").string()})
                .code,
            0);
  EXPECT_EQ(slurp(path("d.csv")), a.out);
}

TEST_F(Generate, RejectsBadArguments) {
  EXPECT_EQ(run({"generate", "--setting", "5"}).code, 2);
  EXPECT_EQ(run({"generate"}).code, 2);
  EXPECT_EQ(run({"generate", "--setting", "1", "--censoring", "weekly"}).code, 2);
  EXPECT_EQ(run({"generate", "--setting", "1", "--n-per-arm", "0"}).code, 2);
}

TEST_F(Fit, CancellingResidualsGiveExactDifference) {
  // Subjects i and i + 20 share arm and intercept and carry opposite
  // residuals, so every estimator's linear smoother cancels them.
  std::ostringstream csv;
  csv << std::setprecision(17) << "subject_id,arm,time_years,egfr\n";
  const double times[] = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
  for (int i = 0; i < 40; ++i) {
    const int k = i % 20;
    const int arm = i % 2;
    const double slope = arm == 0 ? -1.0 : -0.25;
    const double intercept = 50.0 + 3.0 * (k / 2 % 3);
    const double sign = i < 20 ? 1.0 : -1.0;
    for (int j = 0; j < 7; ++j)
      csv << "S" << i << ',' << arm << ',' << times[j] << ','
          << intercept + slope * times[j] + sign * (0.4 * std::sin(1.3 * j + 0.7 * k) + 0.3 * std::cos(0.9 * j * (k + 1)))
          << '\n';
  }
  write("lines.csv", csv.str());
  for (const char* m : {"lm", "lme", "two-stage", "mmrm"}) {
    auto r = run({"fit", "--data", path("lines.csv").string(), "--method", m});
    ASSERT_EQ(r.code, 0) << m << ": " << r.err;
    auto l = lines(r.out);
    ASSERT_EQ(l.size(), 2u);
    EXPECT_EQ(l[0], "method,arm,slope,se,ref_slope,ref_se,diff,diff_se,ci_low,ci_high,converged");
    auto f = split(l[1]);
    EXPECT_EQ(f[0], m);
    EXPECT_NEAR(std::stod(f[6]), 0.75, 1e-8) << m;
    EXPECT_EQ(f[10], "true");
  }
}

TEST_F(Fit, ThreeArmFixtureReportsBothContrasts) {
  const std::string data = std::string(SLOPELAB_TEST_DATA) + "/three_arm.csv";
  auto r = run({"fit", "--data", data, "--method", "mmrm"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto l = lines(r.out);
  ASSERT_EQ(l.size(), 3u);
  EXPECT_EQ(split(l[1])[1], "1");
  EXPECT_EQ(split(l[2])[1], "2");

  auto one = run({"fit", "--data", data, "--method", "mmrm", "--arm", "2"});
  ASSERT_EQ(one.code, 0);
  EXPECT_EQ(lines(one.out)[1], l[2]);
  EXPECT_EQ(run({"fit", "--data", data, "--method", "mmrm", "--arm", "3"}).code, 2);
}

TEST_F(Fit, TwoSlopeNeedsChangePoint) {
  const std::string data = std::string(SLOPELAB_TEST_DATA) + "/three_arm.csv";
  auto r = run({"fit", "--data", data, "--method", "two-slope"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--tau0"), std::string::npos);
  EXPECT_EQ(run({"fit", "--data", data, "--method", "lm", "--tau0-candidates", "0.1,0.2"}).code, 2);
}

TEST_F(Fit, TwoSlopeCandidatesPickOne) {
  const std::string data = std::string(SLOPELAB_TEST_DATA) + "/three_arm.csv";
  auto r = run({"fit", "--data", data, "--method", "two-slope", "--tau0-candidates",
                "0.07692307692307693,0.15384615384615385,0.23076923076923078"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("selected tau0"), std::string::npos);
  EXPECT_EQ(lines(r.out).size(), 3u);
}

TEST_F(Fit, BadInputsAreUsageErrors) {
  EXPECT_EQ(run({"fit", "--data", path("missing.csv").string(), "--method", "lm"}).code, 2);
  write("bad.csv", "id,arm,t,y\n1,0,0,1\n");
  EXPECT_EQ(run({"fit", "--data", path("bad.csv").string(), "--method", "lm"}).code, 2);
  write("ok.csv", "subject_id,arm,time_years,egfr\na,0,0,1\na,0,1,2\nb,1,0,1\nb,1,1,3\n");
  EXPECT_EQ(run({"fit", "--data", path("ok.csv").string(), "--method", "quadratic"}).code, 2);
  EXPECT_EQ(run({"fit", "--data", path("ok.csv").string(), "--method", "lm", "--t1", "0"}).code, 2);
}

TEST_F(Study, SummaryHasOneRowPerCell) {
  write("cfg.json", kSmallConfig);
  auto r = run({"study", "--config", path("cfg.json").string(), "--out", path("s.csv").string(), "--quiet"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto l = lines(slurp(path("s.csv")));
  ASSERT_EQ(l.size(), 21u);
  EXPECT_EQ(l[0], "setting,method,n_reps,n_fail,mean_est,truth,bias,sd,rmse,mean_se,coverage95");
  EXPECT_TRUE(fs::exists(path("s.csv.manifest.json")));
  EXPECT_EQ(r.err.find("/80 replicates"), std::string::npos);
}

TEST_F(Study, WorkerCountDoesNotChangeBytes) {
  write("one.json", kSmallConfig);
  auto cfg8 = cli::Json::parse(kSmallConfig);
  cfg8["workers"] = 8;
  write("eight.json", cfg8.dump());
  ASSERT_EQ(run({"study", "--config", path("one.json").string(), "--out", path("a.csv").string(), "--dump",
                 path("a.rep.csv").string(), "--quiet"})
                .code,
            0);
  ASSERT_EQ(run({"study", "--config", path("eight.json").string(), "--out", path("b.csv").string(), "--dump",
                 path("b.rep.csv").string(), "--quiet"})
                .code,
            0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_EQ(slurp(path("a.rep.csv")), slurp(path("b.rep.csv")));
}

TEST_F(Study, EnvironmentOverridesWorkers) {
  write("cfg.json", kSmallConfig);
  ::setenv("SLOPELAB_WORKERS", "4", 1);
  auto r = run({"study", "--config", path("cfg.json").string(), "--out", path("a.csv").string(), "--quiet"});
  ::setenv("SLOPELAB_WORKERS", "zero", 1);
  auto bad = run({"study", "--config", path("cfg.json").string(), "--quiet"});
  ::unsetenv("SLOPELAB_WORKERS");
  ASSERT_EQ(r.code, 0);
  auto manifest = cli::Json::parse(slurp(path("a.csv.manifest.json")));
  EXPECT_EQ(manifest["config"]["workers"], 4);
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("SLOPELAB_WORKERS"), std::string::npos);
}

TEST_F(Study, InvalidKeysAreAllReported) {
  write("cfg.json", R"({"settings": [1, 7], "n_reps": 1, "colour": "red", "tau0": 4})");
  auto r = run({"study", "--config", path("cfg.json").string()});
  EXPECT_EQ(r.code, 2);
  for (const char* key : {"settings", "n_reps", "colour", "tau0"}) EXPECT_NE(r.err.find(key), std::string::npos) << key;
  EXPECT_EQ(r.err.find("methods"), std::string::npos);

  write("broken.json", "{ not json");
  EXPECT_EQ(run({"study", "--config", path("broken.json").string()}).code, 2);
}

TEST_F(Study, ManifestReproducesRun) {
  write("cfg.json", kSmallConfig);
  ASSERT_EQ(run({"study", "--config", path("cfg.json").string(), "--out", path("a.csv").string(), "--quiet"}).code, 0);
  auto manifest = cli::Json::parse(slurp(path("a.csv.manifest.json")));
  EXPECT_EQ(manifest["tool"], "slopelab");
  EXPECT_EQ(manifest["format_version"], "1");
  EXPECT_EQ(manifest["master_seed"], 11);
  EXPECT_EQ(manifest["rows"].size(), 20u);
  ASSERT_EQ(run({"study", "--config", path("a.csv.manifest.json").string(), "--out", path("b.csv").string(),
                 "--quiet"})
                .code,
            0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
}

TEST_F(Study, ManifestGoesToStderrWithoutOut) {
  write("cfg.json", R"({"settings": [1], "methods": ["lm"], "n_per_arm": 10, "n_reps": 3})");
  auto r = run({"study", "--config", path("cfg.json").string(), "--quiet"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(lines(r.out).size(), 2u);
  EXPECT_NE(r.err.find("\"tool\": \"slopelab\""), std::string::npos);
}

TEST(Truth, DefaultTable) {
  auto r = run({"truth"});
  ASSERT_EQ(r.code, 0);
  auto l = lines(r.out);
  ASSERT_EQ(l.size(), 5u);
  EXPECT_EQ(l[0], "setting,arm_slope_trt,arm_slope_ctl,difference");
  EXPECT_EQ(l[1], "1,-1.50,-2.25,0.75");
  EXPECT_EQ(l[2], "2,-1.39,-2.13,0.75");
  EXPECT_EQ(split(l[3])[3], "0.75");
  EXPECT_EQ(split(l[4])[3], "1.25");
}

TEST(Truth, CustomInterval) {
  auto r = run({"truth", "--t1", "0.5", "--t2", "3", "--digits", "4"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(split(lines(r.out)[3])[3], "1.2500");
  EXPECT_EQ(split(lines(r.out)[1])[3], "0.7500");
}

TEST(Truth, RejectsEmptyInterval) {
  EXPECT_EQ(run({"truth", "--t1", "1", "--t2", "1"}).code, 2);
  EXPECT_EQ(run({"truth", "--t2", "4"}).code, 2);
  EXPECT_EQ(run({"truth", "--digits", "99"}).code, 2);
}
