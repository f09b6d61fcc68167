#include "qrsub/datagen.hpp"
#include "qrsub/dataset.hpp"
#include "qrsub_cli/cli.hpp"
#include "qrsub_cli/config_file.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifndef QRSUB_TEST_DATA_DIR
#error "QRSUB_TEST_DATA_DIR must point at tests/data"
#endif

namespace qrsub::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("qrsub_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
    SyntheticSpec spec;
    spec.n_rows = 20'000;
    spec.covariate_law = CovariateLaw::MvT3;
    spec.error_law = ErrorLaw::Exponential1;
    spec.tau = 0.75;
    spec.seed = 31;
    save_csv(generate(spec).data, data_path());
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path data_path() const { return dir_ / "d.csv"; }
  fs::path path(const std::string& name) const { return dir_ / name; }

  std::vector<std::string> fit_args(const std::string& seed) const {
    return {"fit", "--input", data_path().string(), "--response", "y", "--tau", "0.75", "--method", "lopt",
            "--n0", "1000", "--n", "1000", "--B", "10", "--seed", seed};
  }

 private:
  fs::path dir_;
};

json without_timings(const std::string& text) {
  json j = json::parse(text);
  j.erase("timings");
  return j;
}

TEST_F(CliTest, FitProducesDocumentedSchema) {
  const auto r = run(fit_args("7"));
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_EQ(j.at("method"), "lopt");
  EXPECT_EQ(j.at("tau"), 0.75);
  EXPECT_EQ(j.at("n0"), 1000);
  EXPECT_EQ(j.at("n"), 1000);
  EXPECT_EQ(j.at("B"), 10);
  EXPECT_EQ(j.at("seed"), 7u);
  ASSERT_EQ(j.at("beta").size(), 7u);
  ASSERT_EQ(j.at("vcov").size(), 7u);
  ASSERT_EQ(j.at("ci").size(), 7u);
  const double r_ef = j.at("r_ef");
  EXPECT_GT(r_ef, 0.0);
  EXPECT_LE(r_ef, 1.0);
  for (std::size_t k = 0; k < 7; ++k) {
    EXPECT_LT(j["ci"][k][0].get<double>(), j["beta"][k].get<double>());
    EXPECT_GT(j["ci"][k][1].get<double>(), j["beta"][k].get<double>());
    EXPECT_NEAR(j["beta"][k].get<double>(), 1.0, 0.3);
  }
  EXPECT_TRUE(j.at("timings").contains("plan_ms"));
  EXPECT_TRUE(j.at("timings").contains("solve_ms_total"));
}

TEST_F(CliTest, FitIsDeterministicForASeed) {
  const auto a = run(fit_args("11"));
  const auto b = run(fit_args("11"));
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(without_timings(a.out).dump(), without_timings(b.out).dump());
  const auto c = run(fit_args("12"));
  EXPECT_NE(without_timings(a.out).dump(), without_timings(c.out).dump());
}

TEST_F(CliTest, FitThreadCountDoesNotChangeResult) {
  auto args = fit_args("5");
  const auto a = run(args);
  args.insert(args.end(), {"--threads", "3"});
  const auto b = run(args);
  EXPECT_EQ(without_timings(a.out).dump(), without_timings(b.out).dump());
}

TEST_F(CliTest, FitWithoutSeedRecordsDrawnSeed) {
  const auto r = run({"fit", "--input", data_path().string(), "--tau", "0.5", "--n", "200", "--n0", "200",
                      "--B", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto seed = json::parse(r.out).at("seed").get<std::uint64_t>();
  EXPECT_NE(r.err.find(std::to_string(seed)), std::string::npos);
  const auto q = run({"--quiet", "fit", "--input", data_path().string(), "--tau", "0.5", "--n", "200",
                      "--n0", "200", "--B", "3"});
  EXPECT_EQ(q.code, 0);
  EXPECT_TRUE(q.err.empty());
}

TEST_F(CliTest, FitWritesToOutPath) {
  auto args = fit_args("3");
  args.insert(args.end(), {"--out", path("fit.json").string()});
  const auto r = run(args);
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(r.out.empty());
  EXPECT_EQ(json::parse(slurp(path("fit.json"))).at("beta").size(), 7u);
}

TEST_F(CliTest, SingleBatchHasNoVariance) {
  const auto r = run({"fit", "--input", data_path().string(), "--tau", "0.5", "--B", "1", "--seed", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_TRUE(j.at("vcov").is_null());
  EXPECT_TRUE(j.at("ci").is_null());
}

TEST_F(CliTest, UsageErrors) {
  const auto missing_tau = run({"fit", "--input", data_path().string()});
  EXPECT_EQ(missing_tau.code, kUsage);
  EXPECT_NE(missing_tau.err.find("--tau"), std::string::npos);
  EXPECT_NE(missing_tau.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run({"fit", "--input", data_path().string(), "--tau", "1.5"}).code, kUsage);
  EXPECT_EQ(run({"fit", "--input", data_path().string(), "--tau", "0.5", "--method", "nope"}).code, kUsage);
  EXPECT_EQ(run({"fit", "--input", data_path().string(), "--tau", "0.5", "--n", "3"}).code, kUsage);
  EXPECT_EQ(run({"fit", "--tau", "0.5"}).code, kUsage);
  EXPECT_EQ(run({}).code, kUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kUsage);
  EXPECT_EQ(run({"--help"}).code, kOk);
}

TEST_F(CliTest, DataAndNumericErrors) {
  EXPECT_EQ(run({"fit", "--input", path("missing.csv").string(), "--tau", "0.5"}).code, kDataError);
  write(path("bad.csv"), "a,y\n1,2\n3,oops\n");
  const auto bad = run({"fit", "--input", path("bad.csv").string(), "--tau", "0.5"});
  EXPECT_EQ(bad.code, kDataError);
  EXPECT_EQ(run({"fit", "--input", path("bad.csv").string(), "--tau", "0.5", "--response", "zz"}).code,
            kDataError);
  std::string collinear = "a,b,y\n";
  for (int i = 0; i < 200; ++i) {
    collinear += std::to_string(i) + "," + std::to_string(2 * i) + "," + std::to_string(i % 7) + "\n";
  }
  write(path("collinear.csv"), collinear);
  const auto r = run({"fit", "--input", path("collinear.csv").string(), "--tau", "0.5", "--n", "50",
                      "--n0", "50", "--B", "2", "--seed", "1"});
  EXPECT_EQ(r.code, kNumericError) << r.err;
}

TEST_F(CliTest, ThreadsEnvironmentFallbackIsValidated) {
  ::setenv("QRS_THREADS", "zero", 1);
  EXPECT_EQ(run(fit_args("1")).code, kUsage);
  ::setenv("QRS_THREADS", "2", 1);
  EXPECT_EQ(run(fit_args("1")).code, kOk);
  ::unsetenv("QRS_THREADS");
}

TEST_F(CliTest, PlanExamples) {
  write(path("one.csv"), "x,y\n2,5\n");
  const auto one = run({"plan", "--input", path("one.csv").string(), "--method", "lopt", "--tau", "0.5",
                        "--beta", "1"});
  ASSERT_EQ(one.code, 0) << one.err;
  EXPECT_EQ(one.out, "row_index,pi\n0,1\n");

  // Norms 1 and 3 with residual signs +,- at the median.
  write(path("two.csv"), "x,y\n1,2\n3,2\n");
  const auto two = run({"plan", "--input", path("two.csv").string(), "--tau", "0.5", "--beta", "1"});
  ASSERT_EQ(two.code, 0) << two.err;
  EXPECT_EQ(two.out, "row_index,pi\n0,0.25\n1,0.75\n");

  const auto uni = run({"plan", "--input", path("two.csv").string(), "--method", "universal"});
  EXPECT_EQ(uni.out, "row_index,pi\n0,0.25\n1,0.75\n");
  EXPECT_EQ(run({"plan", "--input", path("two.csv").string(), "--beta", "1,2", "--tau", "0.5"}).code,
            kUsage);
  EXPECT_EQ(run({"plan", "--input", path("two.csv").string(), "--beta", "x", "--tau", "0.5"}).code, kUsage);
}

TEST_F(CliTest, PlanSumsToOneAndLeavesInputUntouched) {
  const std::string before = slurp(data_path());
  for (const char* method : {"uniform", "lopt", "aopt", "universal"}) {
    const auto r = run({"plan", "--input", data_path().string(), "--method", method, "--tau", "0.75",
                        "--n0", "500", "--seed", "9"});
    ASSERT_EQ(r.code, 0) << method << r.err;
    std::istringstream lines(r.out);
    std::string line;
    std::getline(lines, line);
    double total = 0.0;
    int rows = 0;
    while (std::getline(lines, line)) {
      total += std::stod(line.substr(line.find(',') + 1));
      ++rows;
    }
    EXPECT_EQ(rows, 20'000);
    EXPECT_NEAR(total, 1.0, 1e-12 * 20'000) << method;
  }
  EXPECT_EQ(slurp(data_path()), before);
}

TEST_F(CliTest, PlanGoldenFile) {
  std::string csv = "x1,x2,y\n";
  for (int i = 0; i < 40; ++i) {
    const double a = (i % 9) - 4.0, b = ((i * 7) % 11) / 3.0;
    csv += std::to_string(a) + "," + std::to_string(b) + "," + std::to_string(a - b + (i % 5) * 0.25) + "\n";
  }
  write(path("g.csv"), csv);
  const auto r = run({"plan", "--input", path("g.csv").string(), "--intercept", "--method", "lopt", "--tau",
                      "0.3", "--n0", "20", "--seed", "2024"});
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path golden = fs::path(QRSUB_TEST_DATA_DIR) / "golden_plan.csv";
  if (std::getenv("QRSUB_UPDATE_GOLDEN")) {
    write(golden, r.out);
    GTEST_SKIP() << "golden file rewritten";
  }
  EXPECT_EQ(r.out, slurp(golden));
}

TEST_F(CliTest, SimulateAndBenchMinimalConfig) {
  write(path("mini.cfg"),
        "# smoke benchmark\n"
        "n_rows = 2000\n"
        "replicates = 5\n"
        "methods = uniform, lopt\n"
        "n0 = 200   # pilot\n"
        "n = 200\n"
        "B = 5\n"
        "base_seed = 77\n");
  const auto start = std::chrono::steady_clock::now();
  const auto bench = run({"bench", "--config", path("mini.cfg").string(), "--out", path("r.csv").string()});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ASSERT_EQ(bench.code, 0) << bench.err;
  EXPECT_LT(secs, 60.0);
  EXPECT_NE(bench.out.find("lopt"), std::string::npos);
  const std::string first = slurp(path("r.csv"));
  EXPECT_EQ(first.substr(0, first.find('\n')),
            "method,tau,n,B,S,mse,emse,coverage_1,coverage_2,coverage_3,coverage_4,coverage_5,coverage_6,"
            "coverage_7,runtime_ms");

  auto strip = [](const std::string& csv) {
    std::istringstream in(csv);
    std::string line, out;
    while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
    return out;
  };
  ASSERT_EQ(run({"bench", "--config", path("mini.cfg").string(), "--out", path("r2.csv").string()}).code, 0);
  EXPECT_EQ(strip(first), strip(slurp(path("r2.csv"))));

  const auto sim = run({"simulate", "--config", path("mini.cfg").string(), "--out", path("sim.csv").string()});
  ASSERT_EQ(sim.code, 0) << sim.err;
  CsvOptions opts;
  opts.response = std::string("y");
  const auto data = load_csv(path("sim.csv"), opts);
  EXPECT_EQ(data.n_rows(), 2000);
  EXPECT_EQ(data.n_cols(), 7);
}

TEST_F(CliTest, BenchJsonRecordsEntropySeed) {
  write(path("noseed.cfg"), "n_rows = 1000\nreplicates = 2\nn0 = 100\nn = 100\nB = 2\np = 2\n");
  const auto r = run({"bench", "--config", path("noseed.cfg").string(), "--out", path("r.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(slurp(path("r.json")));
  const auto seed = j.at("metadata").at("config").at("base_seed").get<std::uint64_t>();
  EXPECT_NE(r.err.find(std::to_string(seed)), std::string::npos);
  EXPECT_EQ(j.at("cells").size(), 2u);
}

TEST_F(CliTest, ConfigErrorsNameTheKey) {
  write(path("bad.cfg"), "n_rows = 1000\nreplicatez = 3\n");
  const auto r = run({"bench", "--config", path("bad.cfg").string(), "--out", path("r.csv").string()});
  EXPECT_EQ(r.code, kUsage);
  EXPECT_NE(r.err.find("replicatez"), std::string::npos);
  write(path("bad2.cfg"), "n_rows = many\n");
  const auto r2 = run({"simulate", "--config", path("bad2.cfg").string(), "--out", path("s.csv").string()});
  EXPECT_EQ(r2.code, kUsage);
  EXPECT_NE(r2.err.find("n_rows"), std::string::npos);
  write(path("bad3.cfg"), "tau = 2\n");
  EXPECT_EQ(run({"simulate", "--config", path("bad3.cfg").string(), "--out", path("s.csv").string()}).code,
            kUsage);
  EXPECT_EQ(run({"bench", "--config", path("nope.cfg").string(), "--out", path("r.csv").string()}).code,
            kDataError);
  EXPECT_FALSE(fs::exists(path("r.csv")));
}

TEST(ConfigFile, GrammarAndApplication) {
  const auto entries = parse_config_text(
      "# comment\n\n  tau = 0.1, 0.5 ,0.9  \nmethods=lopt,universal # trailing\nadd_intercept = true\n"
      "B = 10,20\nerror_law = t1\nsweep = yes\n");
  ExperimentConfig c;
  bool sweep = false;
  EXPECT_FALSE(apply_config(entries, c, &sweep));
  EXPECT_EQ(c.taus, (std::vector<double>{0.1, 0.5, 0.9}));
  EXPECT_EQ(c.methods, (std::vector<BenchMethod>{BenchMethod::Lopt, BenchMethod::Universal}));
  EXPECT_TRUE(c.add_intercept);
  EXPECT_EQ(c.bs, (std::vector<Index>{10, 20}));
  EXPECT_EQ(c.error_law, ErrorLaw::T1);
  EXPECT_TRUE(sweep);
  EXPECT_THROW(parse_config_text("no equals sign\n"), ConfigError);
  EXPECT_THROW(apply_config(parse_config_text("sweep = true\n"), c), ConfigError);
  EXPECT_TRUE(apply_config(parse_config_text("base_seed = 5\n"), c));
  EXPECT_EQ(c.base_seed, 5u);
}

}  // namespace
}  // namespace qrsub::cli
