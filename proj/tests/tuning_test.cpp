#include <cmath>
#include <cstdlib>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "abelscale/error.hpp"
#include "abelscale/tuning.hpp"

using namespace abelscale;

namespace {

struct Benchmark {
  Grid grid{100};
  std::shared_ptr<const ForwardOperator> forward;
  std::shared_ptr<const PenaltyMatrix> penalty;
  Eigen::VectorXd x_true;
  Eigen::VectorXd y_clean;
};

Benchmark make_setup(double a, const Kernel& kernel, int r, double p, const TestFunction& f, int n = 100) {
  Benchmark s;
  s.grid = Grid(n);
  s.forward = std::make_shared<const ForwardOperator>(build_abel_matrix(a, s.grid, kernel));
  s.penalty = std::make_shared<const PenaltyMatrix>(build_penalty(r, p, s.grid));
  s.x_true = s.grid.sample([&](double t) { return f(t); });
  s.y_clean = apply_forward(*s.forward, s.x_true);
  return s;
}

double sample_std(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / (v.size() - 1));
}

RatePlan small_plan() {
  RatePlan plan;
  plan.n = 60;
  plan.deltas = {0.005, 0.01, 0.02, 0.05, 0.1};
  plan.replicates = 2;
  plan.seed = 11;
  plan.sweep.step_factor = std::pow(10.0, 0.25);
  return plan;
}

}  // namespace

TEST(AddNoise, ZeroLevelIsIdentity) {
  const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(50, 0.0, 1.0);
  EXPECT_EQ(add_noise(y, {0.0, 3}), y);
}

TEST(AddNoise, StandardDeviationAndDeterminism) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(10000);
  const Eigen::VectorXd eta = add_noise(zero, {0.05, 42});
  const double sd = sample_std(eta);
  EXPECT_GE(sd, 0.049);
  EXPECT_LE(sd, 0.051);
  EXPECT_EQ(add_noise(zero, {0.05, 42}), eta);
  EXPECT_NE(add_noise(zero, {0.05, 43}), eta);
  EXPECT_THROW(add_noise(zero, {-0.1, 1}), ValidationError);
}

TEST(AlphaSweep, DefaultGrid) {
  const AlphaSweep sweep;
  const std::vector<double> v = sweep.values();
  ASSERT_EQ(v.size(), 201u);
  EXPECT_DOUBLE_EQ(v.front(), 1e-16);
  EXPECT_NEAR(v.back() / 1e4, 1.0, 1e-9);
  for (std::size_t i = 1; i < v.size(); ++i) EXPECT_GT(v[i], v[i - 1]);
  AlphaSweep bad;
  bad.alpha_max = bad.alpha_min;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = AlphaSweep{};
  bad.step_factor = 1.0;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(OracleAlpha, NoiseFreeSmallestAlphaWins) {
  const Benchmark s = make_setup(1.0, Kernel::constant(), 1, 0.0, TestFunction::centered_gaussian());
  AlphaSweep full;
  full.patience = std::numeric_limits<int>::max();
  const OracleChoice all = oracle_alpha(s.x_true, s.y_clean, s.forward, s.penalty, full);
  for (std::size_t i = 1; i < all.errors.size(); ++i)
    ASSERT_GE(all.errors[i], all.errors[i - 1] * (1 - 1e-6)) << "error not monotone at alpha " << all.alphas[i];
  const OracleChoice choice = oracle_alpha(s.x_true, s.y_clean, s.forward, s.penalty);
  EXPECT_DOUBLE_EQ(choice.alpha, AlphaSweep{}.alpha_min);
}

TEST(OracleAlpha, ReturnsMinimumOfSweep) {
  const Benchmark s = make_setup(1.0, Kernel::constant(), 1, 1.0, TestFunction::centered_gaussian());
  const Eigen::VectorXd y = add_noise(s.y_clean, {0.05, 5});
  const OracleChoice choice = oracle_alpha(s.x_true, y, s.forward, s.penalty);
  ASSERT_FALSE(choice.errors.empty());
  for (double e : choice.errors) EXPECT_LE(choice.error, e);
  EXPECT_NEAR(choice.error, weighted_norm(choice.reconstruction.x - s.x_true, s.grid), 1e-15);
  // The early stop must not change the answer.
  AlphaSweep full;
  full.patience = std::numeric_limits<int>::max();
  EXPECT_EQ(oracle_alpha(s.x_true, y, s.forward, s.penalty, full).alpha, choice.alpha);
}

TEST(NoiseLevel, SampleStandardDeviationOfPrefix) {
  Eigen::VectorXd y(12);
  y << 1, -1, 1, -1, 1, -1, 1, -1, 1, -1, 50, 60;
  EXPECT_NEAR(estimate_noise_level(y, 10), std::sqrt(10.0 / 9.0), 1e-14);
  EXPECT_THROW(estimate_noise_level(y, 13), ValidationError);
}

TEST(DiscrepancyAlpha, ZeroPrefixDrivesAlphaToMinimum) {
  const TestFunction late = TestFunction::from_function(
      "late", [](double t) { return t > 0.3 ? (t - 0.3) * (t - 0.3) * (1 - t) : 0.0; });
  const Benchmark s = make_setup(1.0, Kernel::constant(), 1, 1.0, late);
  const DiscrepancyChoice choice = discrepancy_alpha(s.y_clean, s.forward, s.penalty, 20);
  EXPECT_EQ(choice.delta_hat, 0.0);
  EXPECT_EQ(choice.alpha, AlphaSweep{}.alpha_min);
}

TEST(DiscrepancyAlpha, StereologyBenchmark) {
  const Benchmark s = make_setup(0.5, Kernel::stereology(), 1, 1.0, TestFunction::centered_gaussian(), 200);
  const Eigen::VectorXd y = add_noise(s.y_clean, {0.05, 1});
  const DiscrepancyChoice choice = discrepancy_alpha(y, s.forward, s.penalty, 20);
  EXPECT_GE(choice.delta_hat, 0.035);
  EXPECT_LE(choice.delta_hat, 0.065);
  EXPECT_NEAR(choice.delta_hat_norm, choice.delta_hat * std::sqrt(200 * s.grid.spacing()), 1e-15);
  EXPECT_NEAR(choice.target, kDefaultTau * choice.delta_hat_norm, 1e-15);
  ASSERT_TRUE(choice.satisfied);
  EXPECT_LE(choice.reconstruction.residual_norm, choice.target);
  // Largest admissible alpha: the next swept value misses the target.
  for (std::size_t i = 0; i + 1 < choice.alphas.size(); ++i)
    if (choice.alphas[i] == choice.alpha) EXPECT_GT(choice.residuals[i + 1], choice.target);

  const OracleChoice oracle = oracle_alpha(s.x_true, y, s.forward, s.penalty);
  const double err = weighted_norm(choice.reconstruction.x - s.x_true, s.grid);
  EXPECT_LE(err, 3.0 * oracle.error);
}

TEST(DiscrepancyAlpha, Validation) {
  const Benchmark s = make_setup(1.0, Kernel::constant(), 1, 1.0, TestFunction::centered_gaussian());
  EXPECT_THROW(discrepancy_alpha(s.y_clean, s.forward, s.penalty, 9), ValidationError);
  EXPECT_THROW(discrepancy_alpha(s.y_clean, s.forward, s.penalty, 10, 0.9), ValidationError);
}

TEST(AprioriAlpha, FormulaExamples) {
  EXPECT_NEAR(apriori_alpha(0.1, 1.0, 1.0, 2.0), 0.0464158883, 1e-9);
  EXPECT_DOUBLE_EQ(apriori_alpha(1.0, 1.0, 1.0, 2.0, 3.7), 3.7);
  EXPECT_NEAR(apriori_alpha(0.2, 0.5, 1.0, 2.5), 0.2, 1e-15);
  EXPECT_THROW(apriori_alpha(0.0, 1.0, 1.0, 2.0), ValidationError);
  EXPECT_THROW(apriori_alpha(0.1, 1.0, 1.0, 0.0), ValidationError);
}

TEST(TheoreticalSlope, UnlimitedSmoothness) {
  EXPECT_NEAR(theoretical_slope(0.5, 1.0, std::nullopt).slope, 2.5 / 3.0, 1e-12);
  EXPECT_NEAR(theoretical_slope(1.0, 1.0, std::nullopt).slope, 0.75, 1e-12);
  EXPECT_NEAR(theoretical_slope(1.5, 1.0, std::nullopt).slope, 0.70, 1e-12);
  EXPECT_FALSE(theoretical_slope(1.0, 1.0, std::nullopt).p_star.has_value());
}

TEST(TheoreticalSlope, SaturatedRegime) {
  const SlopePrediction pred = theoretical_slope(1.0, 1.0, 1.5);
  EXPECT_NEAR(pred.slope, 0.6, 1e-12);
  ASSERT_TRUE(pred.p_star.has_value());
  EXPECT_NEAR(*pred.p_star, 0.25, 1e-12);
  EXPECT_TRUE(pred.saturated);
  const SlopePrediction below = theoretical_slope(1.0, 0.1, 1.5);
  EXPECT_FALSE(below.saturated);
  EXPECT_NEAR(below.q_effective, 1.2, 1e-12);
  EXPECT_NEAR(below.slope, 1.2 / 2.2, 1e-12);
}

TEST(FitLogLog, ExactPowerLaws) {
  const std::vector<double> d = {0.005, 0.01, 0.02, 0.05, 0.1};
  std::vector<double> e1, e2;
  for (double x : d) {
    e1.push_back(std::pow(x, 0.75));
    e2.push_back(3 * x);
  }
  const LogLogFit f1 = fit_loglog_slope(d, e1);
  EXPECT_NEAR(f1.slope, 0.75, 1e-12);
  EXPECT_NEAR(f1.r_squared, 1.0, 1e-12);
  const LogLogFit f2 = fit_loglog_slope(d, e2);
  EXPECT_NEAR(f2.slope, 1.0, 1e-12);
  EXPECT_NEAR(f2.intercept, std::log(3.0), 1e-12);
}

TEST(FitLogLog, JitteredPowerLaw) {
  const std::vector<double> d = default_deltas();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> e;
    for (double x : d) e.push_back(std::pow(x, 0.6) * (1 + jitter(rng)));
    const double slope = fit_loglog_slope(d, e).slope;
    EXPECT_GE(slope, 0.55);
    EXPECT_LE(slope, 0.65);
  }
}

TEST(FitLogLog, Validation) {
  const std::vector<double> three = {0.1, 0.2, 0.3};
  EXPECT_THROW(fit_loglog_slope(three, three), ValidationError);
  const std::vector<double> d = {0.1, 0.2, 0.3, 0.4};
  const std::vector<double> bad = {0.1, 0.0, 0.3, 0.4};
  EXPECT_THROW(fit_loglog_slope(d, bad), ValidationError);
}

TEST(DefaultDeltas, EightLogSpacedLevels) {
  const std::vector<double> d = default_deltas();
  ASSERT_EQ(d.size(), 8u);
  EXPECT_NEAR(d.front(), 0.005, 1e-15);
  EXPECT_NEAR(d.back(), 0.1, 1e-15);
  for (std::size_t i = 2; i < d.size(); ++i) EXPECT_NEAR(d[i] / d[i - 1], d[1] / d[0], 1e-12);
}

TEST(TestFunctions, UnitL2Norm) {
  for (const TestFunction& f : {TestFunction::centered_gaussian(), TestFunction::off_center_gaussian()}) {
    const int m = 200000;
    double sum = 0.0;
    for (int k = 0; k < m; ++k) {
      const double v = f((k + 0.5) / m);
      sum += v * v / m;
    }
    EXPECT_NEAR(sum, 1.0, 1e-6) << f.name;
  }
  EXPECT_EQ(TestFunction::off_center_gaussian().center, 0.2);
}

TEST(AlphaRuleNames, RoundTrip) {
  for (AlphaRule rule : {AlphaRule::Fixed, AlphaRule::Oracle, AlphaRule::Discrepancy, AlphaRule::Apriori})
    EXPECT_EQ(alpha_rule_from_string(to_string(rule)), rule);
  EXPECT_THROW(alpha_rule_from_string("gcv"), ValidationError);
}

TEST(RatePlan, Validation) {
  RatePlan plan = small_plan();
  EXPECT_NO_THROW(plan.validate());
  plan.deltas = {0.01, 0.02, 0.05};
  EXPECT_THROW(plan.validate(), ValidationError);
  plan.deltas = {0.01, 0.02, 0.03, 0.05};
  EXPECT_THROW(plan.validate(), ValidationError);  // less than a decade
  plan = small_plan();
  plan.deltas[2] = -0.02;
  EXPECT_THROW(plan.validate(), ValidationError);
  plan = small_plan();
  plan.replicates = 0;
  EXPECT_THROW(plan.validate(), ValidationError);
  plan = small_plan();
  plan.q = 0.0;
  EXPECT_THROW(plan.validate(), ValidationError);
}

TEST(RateStudy, DeterministicAcrossThreadCounts) {
  RatePlan one = small_plan();
  one.threads = 1;
  RatePlan many = small_plan();
  many.threads = 4;
  const RateStudyResult a = rate_study(one);
  const RateStudyResult b = rate_study(many);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a.points[i].mean_error, b.points[i].mean_error);
    EXPECT_EQ(a.points[i].mean_alpha, b.points[i].mean_alpha);
  }
  EXPECT_EQ(a.alpha_trace, b.alpha_trace);
  EXPECT_EQ(a.fit.slope, b.fit.slope);
  EXPECT_TRUE(a.complete);
  EXPECT_NEAR(a.theoretical_slope(), 0.75, 1e-12);
  EXPECT_LE(a.fitted_slope(), 1.05);
  for (const RatePoint& pt : a.points) EXPECT_GT(pt.mean_error, 0.0);
}

TEST(RateStudy, DifferentSeedsDiffer) {
  RatePlan other = small_plan();
  other.seed = 12;
  EXPECT_NE(rate_study(small_plan()).error_trace, rate_study(other).error_trace);
}

TEST(RateStudy, FixedAndAprioriRules) {
  RatePlan fixed = small_plan();
  fixed.alpha_rule = AlphaRule::Fixed;
  fixed.fixed_alpha = 1e-5;
  for (const auto& row : rate_study(fixed).alpha_trace)
    for (double alpha : row) EXPECT_EQ(alpha, 1e-5);
  RatePlan apriori = small_plan();
  apriori.alpha_rule = AlphaRule::Apriori;
  apriori.q = 2.0;
  const RateStudyResult res = rate_study(apriori);
  for (std::size_t i = 0; i < apriori.deltas.size(); ++i)
    EXPECT_NEAR(res.alpha_trace[i][0], apriori_alpha(apriori.deltas[i], 1.0, 1.0, 2.0), 1e-15);
  // Without q the rule uses the saturation smoothness 2p + a.
  apriori.q.reset();
  const RateStudyResult unlimited = rate_study(apriori);
  EXPECT_NEAR(unlimited.alpha_trace[0][0], apriori_alpha(apriori.deltas[0], 1.0, 1.0, 3.0), 1e-15);
}

TEST(RateStudy, FailingCellAbortsWithPartialResult) {
  RatePlan plan = small_plan();
  plan.test_function = TestFunction::from_function("broken", [](double) { return std::nan(""); });
  try {
    rate_study(plan);
    FAIL() << "expected RateStudyAborted";
  } catch (const RateStudyAborted& e) {
    EXPECT_FALSE(e.partial().complete);
  }
}

TEST(ThreadCount, ExplicitEnvironmentAndDefault) {
  EXPECT_EQ(resolve_thread_count(3), 3);
  ::setenv("ABELSCALE_THREADS", "2", 1);
  EXPECT_EQ(resolve_thread_count(0), 2);
  EXPECT_EQ(resolve_thread_count(8), 2);
  ::unsetenv("ABELSCALE_THREADS");
  EXPECT_GE(resolve_thread_count(0), 1);
}
