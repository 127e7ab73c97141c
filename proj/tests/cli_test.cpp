#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("deadbeat_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& name, const std::string& body) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << body << "output: {dir: " << (dir_ / "out").string() << "}\n";
    return p;
  }

  int run(const std::string& args) const {
    const std::string cmd = std::string(DEADBEAT_CLI_PATH) + " " + args + " > " + (dir_ / "stdout.txt").string() +
                            " 2> " + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string slurp(const fs::path& p) const {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  std::vector<std::string> lines(const fs::path& p) const {
    std::istringstream in(slurp(p));
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
  }

  fs::path out(const std::string& file) const { return dir_ / "out" / file; }

  fs::path dir_;
};

std::vector<double> fields(const std::string& line) {
  std::vector<double> out;
  std::istringstream in(line);
  for (std::string cell; std::getline(in, cell, ',');) out.push_back(std::stod(cell));
  return out;
}

constexpr const char* kIntegrator = "model: {name: pure-integrator}\nx0: [2]\ngrid: {h_s: 0.001, T: 1}\nr: 0.5\n";
constexpr const char* kOscillator =
    "model: {name: harmonic-oscillator}\nx0: [1, 0]\ngrid: {h_s: 0.0005, T: 3}\nr: 1\n";

TEST_F(Cli, SimulatePureIntegrator) {
  const auto cfg = write_config("a.yaml", kIntegrator);
  ASSERT_EQ(run("simulate " + cfg.string()), 0) << slurp(dir_ / "stderr.txt");
  const auto rows = lines(out("simulate.csv"));
  ASSERT_EQ(rows.front(), "t,x1,y1");
  ASSERT_EQ(rows.size(), 1002u);
  const auto last = fields(rows.back());
  EXPECT_EQ(last[0], 1.0);
  EXPECT_EQ(last[1], 2.0);
  EXPECT_NEAR(last[2], 2.0, 1e-9);
}

TEST_F(Cli, SimulateOscillatorHalfTurn) {
  // h_s = pi / 6284 puts T = pi on the grid.
  const auto cfg = write_config("pi.yaml",
                                "model: {name: harmonic-oscillator}\nx0: [1, 0]\n"
                                "grid: {h_s: 0.0004999351772103426, T: 3.141592653589793}\nr: 3.141592653589793\n");
  ASSERT_EQ(run("simulate " + cfg.string()), 0) << slurp(dir_ / "stderr.txt");
  const auto last = fields(lines(out("simulate.csv")).back());
  EXPECT_NEAR(last[1], -1.0, 1e-8);
  EXPECT_NEAR(last[2], 0.0, 1e-8);
}

TEST_F(Cli, ObserveOscillator) {
  const auto cfg = write_config("a.yaml", kOscillator);
  ASSERT_EQ(run("observe --plot " + cfg.string()), 0) << slurp(dir_ / "stderr.txt");
  const auto rows = lines(out("observe.csv"));
  ASSERT_EQ(rows.front(), "t,x1,x2,z1,z2,err_norm,is_reset");
  const auto last = fields(rows.back());
  EXPECT_NEAR(last[0], 3.0, 1e-12);
  EXPECT_LE(last[5], 1e-6);
  EXPECT_EQ(last[6], 1.0);
  EXPECT_NE(slurp(out("observe.svg")).find("<svg"), std::string::npos);
  const std::string with_plot = slurp(out("observe.csv"));
  ASSERT_EQ(run("observe " + cfg.string()), 0);
  EXPECT_EQ(with_plot, slurp(out("observe.csv")));
}

TEST_F(Cli, ObserveNoisyScalarNonlinear) {
  const auto cfg = write_config("n.yaml",
                                "model: {name: scalar-nonlinear}\nx0: [1]\ngrid: {h_s: 0.001, T: 5}\nr: 1\n"
                                "noise: {kind: uniform, amplitude: 0.01, seed: 3}\n");
  ASSERT_EQ(run("observe " + cfg.string()), 0);
  const auto rows = lines(out("observe.csv"));
  EXPECT_EQ(fields(rows[1])[0], 0.0);
  for (std::size_t i = 1; i < rows.size(); ++i) ASSERT_TRUE(std::isfinite(fields(rows[i])[3])) << rows[i];
}

TEST_F(Cli, FullOrderColumns) {
  const auto cfg = write_config("a.yaml", std::string(kOscillator) + "observer: {mode: full}\nw0: [3]\n");
  ASSERT_EQ(run("observe " + cfg.string()), 0);
  EXPECT_EQ(lines(out("observe.csv")).front(), "t,x1,x2,z1,z2,y1,w1,err_norm,is_reset");
}

TEST_F(Cli, ConfigErrorsExitTwo) {
  const auto cfg = write_config("bad.yaml", "model: {name: pure-integrator}\nx0: [1]\ngrid: {h_s: 0.1, T: 1}\nr: 0.3\n");
  EXPECT_EQ(run("simulate " + cfg.string()), 2);
  EXPECT_NE(slurp(dir_ / "stderr.txt").find("'r'"), std::string::npos);
  EXPECT_EQ(run("simulate"), 2);
  EXPECT_EQ(run("launch " + cfg.string()), 2);
}

TEST_F(Cli, MissingConfigIsIoError) { EXPECT_EQ(run("simulate " + (dir_ / "nope.yaml").string()), 5); }

TEST_F(Cli, DivergenceExitsThreeWithMarker) {
  const auto cfg = write_config("div.yaml",
                                "model: {name: linear, A: [[60]], Ct: [[1]]}\nx0: [1]\ngrid: {h_s: 0.001, T: 2}\nr: 1\n");
  EXPECT_EQ(run("simulate " + cfg.string()), 3);
  const auto rows = lines(out("simulate.csv"));
  ASSERT_GT(rows.size(), 2u);
  EXPECT_EQ(rows.back().rfind("# diverged_at,", 0), 0u);
  EXPECT_EQ(run("observe " + cfg.string()), 3);
}

TEST_F(Cli, CheckReportsCertificate) {
  const auto cfg = write_config("a.yaml", kOscillator);
  ASSERT_EQ(run("check " + cfg.string()), 0);
  const auto rows = lines(out("check.csv"));
  ASSERT_EQ(rows.front(), "window_start,r,det_Q,min_eig,distinguishable,tolerance,det_condition,det_times");
  EXPECT_NE(rows[1].find(",1,"), std::string::npos);
}

TEST_F(Cli, CheckUnobservableExitsFour) {
  const auto cfg = write_config("c0.yaml",
                                "model: {name: linear, A: [[0]], b: [1], Ct: [[0]]}\nx0: [1]\ngrid: {h_s: 0.001, T: 1}\nr: 1\n");
  EXPECT_EQ(run("check " + cfg.string()), 4);
  EXPECT_EQ(run("observe " + cfg.string()), 4);
  EXPECT_NE(slurp(dir_ / "stderr.txt").find("ObservabilityError"), std::string::npos);
}

TEST_F(Cli, CheckSkipsDeterminantForVectorOutput) {
  const auto cfg = write_config("k2.yaml",
                                "model: {name: linear, A: [[0, 1], [-1, 0]], Ct: [[1, 0], [0, 1]]}\nx0: [1, 0]\n"
                                "grid: {h_s: 0.001, T: 1}\nr: 1\n");
  EXPECT_EQ(run("check " + cfg.string()), 0);
  EXPECT_NE(slurp(dir_ / "stdout.txt").find("determinant search skipped"), std::string::npos);
}

TEST_F(Cli, SweepIsByteIdenticalAcrossRuns) {
  const auto cfg = write_config("sw.yaml",
                                "model: {name: scalar-nonlinear}\nx0: [1]\ngrid: {h_s: 0.001, T: 4}\nr: 1\n"
                                "noise: {kind: uniform}\nsweep: {kind: bibo, amplitudes: [0.001, 0.01], seeds: [1, 2]}\n");
  ASSERT_EQ(run("sweep " + cfg.string()), 0) << slurp(dir_ / "stderr.txt");
  const std::string first = slurp(out("sweep.csv"));
  ASSERT_EQ(run("sweep --quiet " + cfg.string()), 0);
  EXPECT_EQ(first, slurp(out("sweep.csv")));
  EXPECT_TRUE(slurp(dir_ / "stdout.txt").empty());
  const auto rows = lines(out("sweep.csv"));
  EXPECT_EQ(rows.front(), "delta,sup_err,final_window_err,last_reset_err,diverged,observability_failed");
  EXPECT_EQ(rows.size(), 5u);
}

TEST_F(Cli, SeedFlagChangesNoise) {
  const auto cfg = write_config("obs.yaml", std::string(kOscillator) + "noise: {kind: uniform, amplitude: 0.01}\n");
  ASSERT_EQ(run("observe --seed 1 " + cfg.string()), 0);
  const std::string a = slurp(out("observe.csv"));
  ASSERT_EQ(run("observe --seed 2 " + cfg.string()), 0);
  EXPECT_NE(a, slurp(out("observe.csv")));
}

TEST_F(Cli, OutputFlagOverridesDirectory) {
  const auto cfg = write_config("a.yaml", kIntegrator);
  ASSERT_EQ(run("simulate --output " + (dir_ / "elsewhere").string() + " " + cfg.string()), 0);
  EXPECT_TRUE(fs::exists(dir_ / "elsewhere" / "simulate.csv"));
}

}  // namespace
