#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "qmatch_cli.hpp"

using namespace qmatch;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "qmatch");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string data(const std::string& country) {
  return std::string(QMATCH_DATA_DIR) + "/" + country + ".csv";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream fields(line);
    std::string cell;
    while (std::getline(fields, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("qmatch_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) +
            "_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

// fit -------------------------------------------------------------------------

TEST_F(CliTest, FitElGamma) {
  const auto r = run({"fit", data("el"), "--family", "gamma", "--seed", "7"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = Json::parse(r.out);
  EXPECT_EQ(j["schema"], "qmatch.fit_report/1");
  EXPECT_EQ(j["model"]["family"], "gamma");
  EXPECT_EQ(j["model"]["likelihood"], "order_statistics");
  EXPECT_NEAR(j["score"]["mean"].get<double>(), 10.2, 1.5);
  EXPECT_EQ(j["observation"]["n_total"], 12918);
  EXPECT_EQ(j["observation"]["scale_divisor"], 7500.0);
  EXPECT_TRUE(j["converged"].get<bool>());
  EXPECT_EQ(j["draws"]["values"].size(), 4000u);
}

TEST_F(CliTest, FitIsByteIdentical) {
  const std::vector<std::string> args{"fit", data("el"), "--family", "gamma", "--seed", "7"};
  EXPECT_EQ(run(args).out, run(args).out);
  auto to_file = args;
  to_file.insert(to_file.end(), {"--out", path("a.json")});
  ASSERT_EQ(run(to_file).code, 0);
  EXPECT_EQ(slurp(path("a.json")), run(args).out);
}

TEST_F(CliTest, SeedFallsBackToEnvironment) {
  const std::vector<std::string> args{"fit", data("el"), "--family", "weibull", "--no-draws"};
  ::setenv("QMATCH_SEED", "7", 1);
  const auto from_env = run(args);
  ::unsetenv("QMATCH_SEED");
  auto explicit_seed = args;
  explicit_seed.insert(explicit_seed.end(), {"--seed", "7"});
  EXPECT_EQ(from_env.out, run(explicit_seed).out);
  EXPECT_NE(run(args).out, from_env.out);
  ::setenv("QMATCH_SEED", "seven", 1);
  EXPECT_EQ(run(args).code, 1);
  ::unsetenv("QMATCH_SEED");
}

TEST_F(CliTest, FitGaussianNoiseSchema) {
  const auto r = run({"fit", data("el"), "--family", "normal", "--likelihood", "gn", "--no-draws"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = Json::parse(r.out);
  EXPECT_EQ(j["model"]["likelihood"], "gaussian_noise");
  EXPECT_EQ(j["model"]["sigma_noise"].get<double>(), 0.05);
  EXPECT_FALSE(j.contains("draws"));
  const auto custom = Json::parse(
      run({"fit", data("el"), "--family", "normal", "--likelihood", "gn", "--sigma-noise", "0.2",
           "--no-draws"})
          .out);
  EXPECT_EQ(custom["model"]["sigma_noise"].get<double>(), 0.2);
}

TEST_F(CliTest, UnconvergedFitWritesReportAndExitsTwo) {
  const auto r = run({"fit", data("el"), "--family", "gamma", "--warmup", "10", "--samples", "20",
                      "--seed", "3", "--out", path("r.json")});
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_NE(r.err.find("R-hat"), std::string::npos);
  EXPECT_FALSE(Json::parse(slurp(path("r.json")))["converged"].get<bool>());
}

// compare ---------------------------------------------------------------------

TEST_F(CliTest, CompareElPicksGamma) {
  const auto r = run({"compare", data("el"), "--seed", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = Json::parse(r.out);
  EXPECT_EQ(j["schema"], "qmatch.compare_report/1");
  ASSERT_EQ(j["ranking"].size(), 7u);
  EXPECT_EQ(j["ranking"][0]["family"], "gamma");
  EXPECT_TRUE(j["ranking"][0]["best"].get<bool>());
  EXPECT_FALSE(j["ranking"][1]["best"].get<bool>());
  EXPECT_EQ(j["fits"].size(), 7u);
  EXPECT_TRUE(j["failures"].empty());
}

TEST_F(CliTest, CompareSePicksWeibull) {
  const auto r = run({"compare", data("se"), "--seed", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(Json::parse(r.out)["ranking"][0]["family"], "weibull");
}

TEST_F(CliTest, CompareSingleFamily) {
  const auto r = run({"compare", data("uk"), "--families", "lognormal"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = Json::parse(r.out);
  ASSERT_EQ(j["ranking"].size(), 1u);
  EXPECT_TRUE(j["ranking"][0]["best"].get<bool>());
}

TEST_F(CliTest, CompareRecordsFailedFits) {
  write_file(path("neg.csv"), "# meta: N=100\nq,x\n0.25,-3\n0.5,-2\n0.75,-1\n");
  const auto r = run({"compare", path("neg.csv"), "--families", "normal,gamma"});
  EXPECT_EQ(r.code, 2);
  const auto j = Json::parse(r.out);
  ASSERT_EQ(j["ranking"].size(), 1u);
  EXPECT_EQ(j["ranking"][0]["family"], "normal");
  ASSERT_EQ(j["failures"].size(), 1u);
  EXPECT_EQ(j["failures"][0]["family"], "gamma");
}

// predict ---------------------------------------------------------------------

TEST_F(CliTest, PredictElTopPercentile) {
  ASSERT_EQ(run({"fit", data("el"), "--family", "gamma", "--seed", "7", "--out", path("el.json")}).code,
            0);
  const auto r = run({"predict", path("el.json"), "--p", "0.5,0.99"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_NEAR(std::stod(rows[1][1]), 23268.6, 0.03 * 23268.6);
  EXPECT_LT(std::stod(rows[1][2]), std::stod(rows[1][1]));
  EXPECT_GT(std::stod(rows[1][3]), std::stod(rows[1][1]));
  const auto unit = csv_rows(run({"predict", path("el.json"), "--p", "0.99", "--divisor", "1"}).out);
  EXPECT_NEAR(std::stod(unit[0][1]) * 7500.0, std::stod(rows[1][1]), 1e-9 * 23268.6);
}

TEST_F(CliTest, PredictLuTopPercentile) {
  ASSERT_EQ(
      run({"fit", data("lu"), "--family", "lognormal", "--seed", "7", "--out", path("lu.json")}).code,
      0);
  const auto rows = csv_rows(run({"predict", path("lu.json"), "--p", "0.99"}).out);
  EXPECT_NEAR(std::stod(rows[0][1]), 115693.5, 0.03 * 115693.5);
}

// simulate --------------------------------------------------------------------

TEST_F(CliTest, SimulateFigureThreeSetup) {
  const std::vector<std::string> args{"simulate", "--dist", "normal", "--params", "3,1.5", "--n",
                                      "200", "--quantiles", "0.05:0.95:10", "--seed", "4"};
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("# meta: N=200\n", 0), 0u) << r.out;
  const auto rows = csv_rows(r.out.substr(r.out.find('\n') + 1));
  ASSERT_EQ(rows.size(), 10u);
  EXPECT_EQ(rows.front()[0], "0.050000000000000003");
  EXPECT_EQ(rows.back()[0], "0.94999999999999996");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_LT(std::stod(rows[i - 1][1]), std::stod(rows[i][1]));
  }
  EXPECT_EQ(run(args).out, r.out);

  // The written dataset feeds straight back into fit.
  auto to_file = args;
  to_file.insert(to_file.end(), {"--out", path("sim.csv")});
  ASSERT_EQ(run(to_file).code, 0);
  EXPECT_EQ(run({"fit", path("sim.csv"), "--family", "normal", "--no-draws"}).code, 0);
}

TEST_F(CliTest, SimulateCauchyDefaultQuantiles) {
  const auto r = run({"simulate", "--dist", "cauchy", "--params", "3,1.5", "--n", "200"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(csv_rows(r.out.substr(r.out.find('\n') + 1)).size(), 20u);
}

// curves ----------------------------------------------------------------------

TEST_F(CliTest, PenaltyCurvesTailBehaviour) {
  const auto r = run({"curves", "--mode", "penalty", "--n", "1000", "--q", "0.1,0.01",
                      "--grid", "-5:5:2001"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 4002u);
  for (double q : {0.1, 0.01}) {
    // row with F(x) closest to q/10
    const std::vector<std::string>* best = nullptr;
    double gap = 1.0;
    for (const auto& row : rows) {
      if (std::stod(row[0]) != q) continue;
      const double d = std::abs(std::stod(row[2]) - q / 10);
      if (d < gap) {
        gap = d;
        best = &row;
      }
    }
    ASSERT_NE(best, nullptr);
    EXPECT_LT(std::stod((*best)[3]), 0.05) << q;
    // At q = 0.1 the gap q - q/10 is 1.8 noise sds, so gn has already fallen
    // to exp(-1.62); the flat-tail claim is checked at q = 0.01.
    if (q == 0.01) {
      EXPECT_GT(std::stod((*best)[4]), 0.5) << q;
    } else {
      EXPECT_NEAR(std::stod((*best)[4]), std::exp(-0.5 * 1.8 * 1.8), 0.01) << q;
    }
  }
}

TEST_F(CliTest, PenaltyDefaultGridHasThreeLevels) {
  const auto r = run({"curves", "--mode", "penalty"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("q,x,cdf,os,gn\n", 0), 0u);
  EXPECT_EQ(csv_rows(r.out).size(), 3u * 401u);
}

TEST_F(CliTest, EnsembleShape) {
  const auto r = run({"curves", "--mode", "ensemble", "--reps", "100", "--n", "20", "--seed", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 2000u);
  for (std::size_t rep = 0; rep < 100; ++rep) {
    for (std::size_t m = 0; m < 20; ++m) {
      const auto& row = rows[rep * 20 + m];
      EXPECT_EQ(std::stoul(row[0]), rep);
      EXPECT_EQ(std::stoul(row[1]), m + 1);
      if (m > 0) {
        EXPECT_LE(std::stod(rows[rep * 20 + m - 1][3]), std::stod(row[3]));
      }
    }
  }
  EXPECT_EQ(run({"curves", "--mode", "ensemble", "--reps", "100", "--n", "20", "--seed", "1"}).out,
            r.out);
}

TEST_F(CliTest, PredictiveCurvesThroughObservedQuantiles) {
  const std::vector<std::pair<std::string, std::string>> best{
      {"el", "gamma"},     {"es", "gamma"},     {"fr", "lognormal"}, {"lu", "lognormal"},
      {"nl", "lognormal"}, {"uk", "lognormal"}, {"it", "weibull"},   {"se", "weibull"}};
  std::vector<std::string> all{"curves", "--mode", "predictive"};
  for (const auto& [country, family] : best) {
    const auto report = path(country + ".json");
    ASSERT_EQ(run({"fit", data(country), "--family", family, "--seed", "2", "--out", report}).code, 0);
    all.insert(all.end(), {"--report", report});

    const auto raw = read_dataset(data(country));
    std::string grid;
    for (double x : raw.x) grid += (grid.empty() ? "" : ",") + format_double(x);
    const auto r = run({"curves", "--mode", "predictive", "--report", report, "--grid", grid});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = csv_rows(r.out);
    ASSERT_EQ(rows.size(), 3u);
    for (std::size_t m = 0; m < 3; ++m) {
      EXPECT_EQ(rows[m][0], country);
      EXPECT_EQ(rows[m][1], family);
      EXPECT_NEAR(std::stod(rows[m][3]), raw.q[m], 0.02) << country << " m=" << m;
    }
  }
  const auto r = run(all);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 8u * 401u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i][0] != rows[i - 1][0]) continue;
    for (std::size_t c = 3; c <= 5; ++c) EXPECT_LE(std::stod(rows[i - 1][c]), std::stod(rows[i][c]));
  }
}

// Exit codes ------------------------------------------------------------------

TEST_F(CliTest, MalformedInputsExitOne) {
  write_file(path("bad.csv"), "q,x\n0.2,1\n0.4,oops\n");
  write_file(path("non.csv"), "q,x\n0.2,1\n0.4,2\n");
  write_file(path("junk.json"), "{not json");
  ASSERT_EQ(run({"fit", data("el"), "--family", "gamma", "--no-draws", "--out", path("nd.json")}).code,
            0);

  const std::vector<std::vector<std::string>> cases{
      {},
      {"frobnicate"},
      {"fit", data("el")},
      {"fit", "/nonexistent.csv", "--family", "gamma"},
      {"fit", path("bad.csv"), "--family", "gamma", "--n", "10"},
      {"fit", path("non.csv"), "--family", "gamma"},
      {"fit", data("el"), "--family", "pareto"},
      {"fit", data("el"), "--family", "gamma", "--likelihood", "xx"},
      {"fit", data("el"), "--family", "gamma", "--p", "1.5"},
      {"fit", data("el"), "--family", "gamma", "--chains", "0"},
      {"fit", data("el"), "--family", "gamma", "--scale-divisor", "-1"},
      {"fit", data("el"), "--family", "gamma", "--likelihood", "gn", "--sigma-noise", "0"},
      {"fit", data("el"), "--family", "gamma", "--out", "/nonexistent/dir/r.json"},
      {"compare", data("el"), "--families", "gamma,gamma"},
      {"compare", data("el"), "--families", "gamma,pareto"},
      {"predict", path("nd.json")},
      {"predict", path("junk.json")},
      {"predict", data("el")},
      {"simulate", "--dist", "normal", "--params", "0", "--n", "10"},
      {"simulate", "--dist", "normal", "--params", "0,-1", "--n", "10"},
      {"simulate", "--dist", "normal", "--params", "0,1", "--n", "10", "--quantiles", "0:1:5"},
      {"simulate", "--dist", "normal", "--params", "0,1", "--n", "10", "--quantiles", "0.01,0.5"},
      {"simulate", "--dist", "normal", "--params", "0,1", "--n", "10", "--quantiles", "a:b"},
      {"curves", "--mode", "penalty", "--reps", "5"},
      {"curves", "--mode", "ensemble", "--q", "0.1"},
      {"curves", "--mode", "predictive"},
      {"curves", "--mode", "sideways"},
      {"curves", "--mode", "penalty", "--grid", "0:1:5", "--points", "9"},
      {"curves", "--mode", "penalty", "--points", "1"},
  };
  for (const auto& args : cases) {
    const auto r = run(args);
    std::string joined;
    for (const auto& a : args) joined += a + ' ';
    EXPECT_EQ(r.code, 1) << joined << "\n" << r.err;
  }
  EXPECT_NE(run({"fit", path("bad.csv"), "--family", "gamma", "--n", "10"}).err.find("bad.csv:3:"),
            std::string::npos);
  const auto unknown = run({"fit", data("el"), "--family", "pareto"});
  EXPECT_NE(unknown.err.find("weibull"), std::string::npos) << unknown.err;
  EXPECT_EQ(run({"predict", data("el").substr(0, 0) + path("nd.json"), "--p", "0.5"}).code, 1);
}

TEST_F(CliTest, HelpExitsZero) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"fit", "--help"}).code, 0);
}

TEST_F(CliTest, AtomicWriteLeavesNoTempFiles) {
  ASSERT_EQ(run({"simulate", "--dist", "gamma", "--params", "2,1", "--n", "50", "--out",
                 path("s.csv")})
                .code,
            0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir_)) {
    ++files;
    EXPECT_EQ(e.path().filename(), "s.csv");
  }
  EXPECT_EQ(files, 1u);
}

// The installed binary follows the same exit-code contract end to end.
TEST_F(CliTest, BinaryExitCodes) {
  auto status = [&](const std::string& args) {
    const std::string cmd = std::string(QMATCH_CLI_PATH) + " " + args + " > " + path("o") + " 2> " +
                            path("e");
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  EXPECT_EQ(status("fit " + data("el") + " --family gamma --seed 7"), 0);
  const auto first = slurp(path("o"));
  EXPECT_EQ(status("fit " + data("el") + " --family gamma --seed 7"), 0);
  EXPECT_EQ(slurp(path("o")), first);
  EXPECT_EQ(first, run({"fit", data("el"), "--family", "gamma", "--seed", "7"}).out);
  EXPECT_EQ(status("fit " + data("el") + " --family pareto"), 1);
  EXPECT_EQ(status("fit " + data("el") + " --family gamma --warmup 10 --samples 20 --seed 3"), 2);
  EXPECT_EQ(status("nonsense"), 1);
}
