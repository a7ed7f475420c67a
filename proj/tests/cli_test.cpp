#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "abelscale/cli.hpp"
#include "abelscale/error.hpp"
#include "abelscale/hilbert_scale.hpp"
#include "abelscale/io.hpp"
#include "abelscale/tuning.hpp"

using namespace abelscale;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    dir_ = fs::temp_directory_path() / ("abelscale_cli_" + std::to_string(rd()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  int cli(const std::string& args) const {
    const std::string cmd = std::string(ABELSCALE_CLI_BINARY) + " " + args + " > " +
                            (dir_ / "stdout.txt").string() + " 2> " + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string out() const { return read_file(dir_ / "stdout.txt"); }
  std::string err() const { return read_file(dir_ / "stderr.txt"); }

  void write_signal(const std::string& name, int n, const std::function<double(double)>& f) const {
    const Grid g(n);
    write_series_csv(path(name), g.nodes(), g.sample(f));
  }

  fs::path dir_;
};

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_F(CliTest, HelpSucceeds) {
  EXPECT_EQ(cli("--help"), 0);
  EXPECT_NE(out().find("rate-study"), std::string::npos);
}

TEST_F(CliTest, ForwardOfOnesIsIdentityRamp) {
  write_signal("ones.csv", 100, [](double) { return 1.0; });
  ASSERT_EQ(cli("forward --a 1 --input " + q(path("ones.csv")) + " --output " + q(path("y.csv"))), 0) << err();
  const Series y = read_series_csv(path("y.csv"));
  ASSERT_EQ(y.value.size(), 100);
  for (int i = 0; i < 100; ++i) EXPECT_NEAR(y.value[i], i / 100.0, 1e-14);
  const json s = json::parse(out());
  EXPECT_EQ(s["n"], 100);
  EXPECT_TRUE(s.contains("version"));
  EXPECT_EQ(s["config"]["a"], 1.0);
}

TEST_F(CliTest, ForwardThenInvertRoundTrip) {
  const TestFunction gauss = TestFunction::centered_gaussian();
  write_signal("x.csv", 100, [&](double t) { return gauss(t); });
  ASSERT_EQ(cli("forward --a 1 --input " + q(path("x.csv")) + " --output " + q(path("y.csv"))), 0) << err();
  ASSERT_EQ(cli("invert --a 1 --p 0 --alpha 1e-14 --input " + q(path("y.csv")) + " --output " +
                q(path("xr.csv")) + " --summary " + q(path("s.json"))),
            0)
      << err();
  const Series x = read_series_csv(path("x.csv"));
  const Series xr = read_series_csv(path("xr.csv"));
  EXPECT_LE((xr.value - x.value).norm() / x.value.norm(), 1e-3);
  const json s = json::parse(read_file(path("s.json")));
  EXPECT_EQ(s["alpha"], 1e-14);
  EXPECT_EQ(s["alpha_rule"], "fixed");
}

TEST_F(CliTest, InvertWithOracleAndNoiseIsDeterministic) {
  const TestFunction gauss = TestFunction::centered_gaussian();
  write_signal("x.csv", 80, [&](double t) { return gauss(t); });
  ASSERT_EQ(cli("forward --a 1 --input " + q(path("x.csv")) + " --output " + q(path("y.csv"))), 0);
  const std::string args = "invert --a 1 --alpha-rule oracle --delta 0.02 --seed 9 --truth " + q(path("x.csv")) +
                           " --input " + q(path("y.csv")) + " --output ";
  ASSERT_EQ(cli(args + q(path("r1.csv")) + " --summary " + q(path("s1.json"))), 0) << err();
  ASSERT_EQ(cli(args + q(path("r2.csv")) + " --summary " + q(path("s2.json"))), 0) << err();
  EXPECT_EQ(read_file(path("r1.csv")), read_file(path("r2.csv")));
  const json s = json::parse(read_file(path("s1.json")));
  EXPECT_GT(s["alpha"].get<double>(), 0.0);
  EXPECT_GT(s["error"].get<double>(), 0.0);
  EXPECT_EQ(s["solver"], "direct");
}

TEST_F(CliTest, InvertDiscrepancyReportsNoiseEstimate) {
  const TestFunction gauss = TestFunction::centered_gaussian();
  write_signal("x.csv", 200, [&](double t) { return gauss(t); });
  ASSERT_EQ(cli("forward --a 0.5 --kernel stereology --input " + q(path("x.csv")) + " --delta 0.05 --seed 1 --output " +
                q(path("y.csv"))),
            0)
      << err();
  ASSERT_EQ(cli("invert --a 0.5 --kernel stereology --alpha-rule discrepancy --input " + q(path("y.csv")) +
                " --output " + q(path("xr.csv"))),
            0)
      << err();
  const json s = json::parse(out());
  EXPECT_NEAR(s["delta_hat"].get<double>(), 0.05, 0.015);
  EXPECT_TRUE(s["discrepancy_satisfied"].get<bool>());
  EXPECT_LE(s["residual_norm"].get<double>(), s["discrepancy_target"].get<double>());
}

TEST_F(CliTest, InvertWithConjugateGradients) {
  write_signal("y.csv", 60, [](double t) { return t * t; });
  ASSERT_EQ(cli("invert --a 1 --alpha 1e-4 --solver cg --input " + q(path("y.csv"))), 0) << err();
  const json s = json::parse(out());
  EXPECT_EQ(s["solver"], "cg");
  EXPECT_TRUE(s["converged"].get<bool>());
}

TEST_F(CliTest, MakeMatrixWritesStencilAndSidecar) {
  ASSERT_EQ(cli("make-matrix --matrix B --r 1 --n 6 --output " + q(path("b.csv"))), 0) << err();
  const Eigen::MatrixXd b = read_matrix_csv(path("b.csv"));
  EXPECT_TRUE(b.isApprox(build_scale_operator(1, Grid(6)).matrix(), 1e-15));
  const json meta = json::parse(read_file(path("b.csv.json")));
  EXPECT_EQ(meta["r"], 1);
  EXPECT_EQ(meta["n"], 6);
  EXPECT_FALSE(meta["experimental"].get<bool>());

  ASSERT_EQ(cli("make-matrix --matrix P --r 2 --p 1.5 --n 20 --output " + q(path("p.csv"))), 0) << err();
  EXPECT_TRUE(read_matrix_csv(path("p.csv")).isApprox(build_penalty(2, 1.5, Grid(20)).matrix(), 1e-12));
  ASSERT_EQ(cli("make-matrix --matrix B --r 4 --n 20 --output " + q(path("b4.csv"))), 0) << err();
  EXPECT_TRUE(json::parse(read_file(path("b4.csv.json")))["experimental"].get<bool>());
}

TEST_F(CliTest, DiagnoseKernel) {
  ASSERT_EQ(cli("diagnose-kernel --a 0.5 --kernel constant --fine-n 200"), 0) << err();
  const json s = json::parse(out());
  EXPECT_EQ(s["condition_met"], "yes");
  EXPECT_EQ(s["hs_norm_estimate"], 0.0);
  ASSERT_EQ(cli("diagnose-kernel --a 0.5 --kernel stereology --fine-n 200 --output " + q(path("d.json")) +
                " --samples " + q(path("h.csv"))),
            0)
      << err();
  const json d = json::parse(read_file(path("d.json")));
  EXPECT_NE(d["condition_met"], "yes");
  EXPECT_FALSE(d["flags"].empty());
  EXPECT_TRUE(fs::exists(path("h.csv")));
}

TEST_F(CliTest, DiagnoseTabulatedKernel) {
  std::ofstream f(path("k.csv"));
  f << "t,s,value\n";
  for (int i = 0; i <= 10; ++i)
    for (int j = 0; j <= i; ++j) f << i / 10.0 << "," << j / 10.0 << "," << 1.0 + (i - j) / 10.0 << "\n";
  f.close();
  ASSERT_EQ(cli("diagnose-kernel --a 1 --kernel file --kernel-file " + q(path("k.csv")) + " --fine-n 200"), 0)
      << err();
  const json s = json::parse(out());
  EXPECT_NEAR(s["hs_norm_estimate"].get<double>(), 1.0 / std::sqrt(2.0), 0.03);
}

TEST_F(CliTest, RateStudyMatchesLibrary) {
  const json plan = {{"a", 1.0},       {"r", 1},
                     {"p", 1.0},       {"test_function", {{"kind", "centered-gaussian"}}},
                     {"deltas", {0.005, 0.01, 0.02, 0.05, 0.1}},
                     {"replicates", 2}, {"alpha_rule", "oracle"},
                     {"n", 60},        {"seed", 3},
                     {"threads", 2}};
  std::ofstream(path("plan.json")) << plan.dump();
  ASSERT_EQ(cli("rate-study " + q(path("plan.json")) + " --output " + q(path("pts.csv")) + " --summary " +
                q(path("s.json"))),
            0)
      << err();
  const json s = json::parse(read_file(path("s.json")));
  RatePlan lib;
  lib.n = 60;
  lib.deltas = {0.005, 0.01, 0.02, 0.05, 0.1};
  lib.replicates = 2;
  lib.seed = 3;
  const RateStudyResult res = rate_study(lib);
  EXPECT_DOUBLE_EQ(s["fitted_slope"].get<double>(), res.fitted_slope());
  EXPECT_DOUBLE_EQ(s["theoretical_slope"].get<double>(), 0.75);
  EXPECT_TRUE(s["p_star"].is_null());
  EXPECT_TRUE(s["complete"].get<bool>());
  const std::string csv = read_file(path("pts.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "delta,mean_error,std_error,alpha");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(cli("forward --a 1 --input " + q(path("missing.csv"))), kExitIo);
  write_signal("x.csv", 50, [](double t) { return t; });
  EXPECT_EQ(cli("forward --a -1 --input " + q(path("x.csv"))), kExitValidation);
  EXPECT_EQ(cli("invert --a 1 --alpha-rule oracle --input " + q(path("x.csv"))), kExitValidation);
  EXPECT_EQ(cli("make-matrix --matrix Q --r 1 --output " + q(path("m.csv"))), kExitValidation);
  EXPECT_EQ(cli("frobnicate"), kExitValidation);
  std::ofstream(path("bad.json")) << "{ not json";
  EXPECT_EQ(cli("rate-study " + q(path("bad.json"))), kExitValidation);
  std::ofstream(path("nan.csv")) << "t,value\n0,1\n0.5,nan\n";
  EXPECT_EQ(cli("forward --a 1 --input " + q(path("nan.csv"))), kExitValidation);
}

TEST(Io, SeriesRoundTripIsExact) {
  const fs::path p = fs::temp_directory_path() / "abelscale_io_series.csv";
  const Grid g(37);
  const Eigen::VectorXd v = g.sample([](double t) { return std::exp(-t) / 3.0; });
  write_series_csv(p, g.nodes(), v);
  const Series s = read_series_csv(p);
  EXPECT_EQ(s.t, g.nodes());
  EXPECT_EQ(s.value, v);
  fs::remove(p);
}

TEST(Io, MatrixRoundTripAndErrors) {
  const fs::path p = fs::temp_directory_path() / "abelscale_io_matrix.csv";
  const Eigen::MatrixXd m = Eigen::MatrixXd::Random(4, 5);
  write_matrix_csv(p, m);
  EXPECT_EQ(read_matrix_csv(p), m);
  fs::remove(p);
  EXPECT_THROW(read_matrix_csv(p), IoError);
  EXPECT_THROW(read_series_csv(p), IoError);
}

TEST(Io, RunDirectlyReportsExitCodes) {
  RunConfig c;
  c.command = Command::MakeMatrix;
  c.r = 1;
  c.n = 3;
  c.output = (fs::temp_directory_path() / "abelscale_direct.csv").string();
  EXPECT_EQ(run(c), kExitValidation);  // n below 2r + 2
}
