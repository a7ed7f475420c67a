#include <cmath>
#include <memory>

#include <gtest/gtest.h>

#include "abelscale/error.hpp"
#include "abelscale/solver.hpp"
#include "abelscale/tuning.hpp"

using namespace abelscale;

namespace {

struct Benchmark {
  Grid grid{100};
  std::shared_ptr<const ForwardOperator> forward;
  std::shared_ptr<const PenaltyMatrix> penalty;
  Eigen::VectorXd x_true;
  Eigen::VectorXd y;
};

Benchmark make_benchmark(double p, double delta, int n = 100) {
  Benchmark b;
  b.grid = Grid(n);
  b.forward = std::make_shared<const ForwardOperator>(build_abel_matrix(1.0, b.grid, Kernel::constant()));
  b.penalty = std::make_shared<const PenaltyMatrix>(build_penalty(1, p, b.grid));
  const TestFunction gauss = TestFunction::centered_gaussian();
  b.x_true = b.grid.sample([&](double t) { return gauss(t); });
  b.y = add_noise(apply_forward(*b.forward, b.x_true), {delta, 7});
  return b;
}

TikhonovProblem problem_for(const Benchmark& b, double alpha) {
  return {b.forward, b.penalty, alpha, b.y};
}

double relative_error(const Eigen::VectorXd& x, const Eigen::VectorXd& ref, const Grid& g) {
  return weighted_norm(x - ref, g) / weighted_norm(ref, g);
}

}  // namespace

TEST(Solver, IdentityOperatorHalvesData) {
  const Grid g(10);
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(10, 10);
  auto forward = std::make_shared<const ForwardOperator>(1.0, g, KernelId::Callback, "identity", id);
  auto penalty = std::make_shared<const PenaltyMatrix>(1, 0.0, g, id, false);
  const Eigen::VectorXd y = g.sample([](double t) { return 1 + t; });
  const TikhonovProblem prob{forward, penalty, 1.0, y};
  EXPECT_TRUE(solve_direct(prob).x.isApprox(y / 2, 1e-14));
  EXPECT_TRUE(solve_cg(prob).x.isApprox(y / 2, 1e-10));
}

TEST(Solver, RecoversNoiseFreeData) {
  const Benchmark b = make_benchmark(0.0, 0.0);
  const Reconstruction rec = solve_direct(problem_for(b, 1e-14));
  EXPECT_LE(relative_error(rec.x, b.x_true, b.grid), 1e-4);
  EXPECT_EQ(rec.solver_id, SolverId::Direct);
}

TEST(Solver, LargeAlphaDampsSolution) {
  const Benchmark b = make_benchmark(1.0, 0.05);
  const double big = weighted_norm(solve_direct(problem_for(b, 1e6)).x, b.grid);
  const double small = weighted_norm(solve_direct(problem_for(b, 1e-4)).x, b.grid);
  EXPECT_LT(big, 0.01 * small);
}

TEST(Solver, NormalEquationResidualIsSmall) {
  const Benchmark b = make_benchmark(1.0, 0.01);
  const Reconstruction rec = solve_direct(problem_for(b, 1e-6));
  EXPECT_LE(rec.normal_residual, 1e-10);
  const Eigen::MatrixXd& t = b.forward->matrix();
  const Eigen::VectorXd r = (t.transpose() * t + 1e-6 * b.penalty->matrix()) * rec.x - t.transpose() * b.y;
  EXPECT_LE(r.norm() / (t.transpose() * b.y).norm(), 1e-10);
  EXPECT_NEAR(rec.residual_norm, weighted_norm(t * rec.x - b.y, b.grid), 1e-14);
  EXPECT_NEAR(rec.penalty_value, b.penalty->value(rec.x), 1e-10 * rec.penalty_value);
}

TEST(Solver, ConjugateGradientsMatchDirect) {
  const Benchmark b = make_benchmark(1.0, 0.05);
  const OracleChoice oracle = oracle_alpha(b.x_true, b.y, b.forward, b.penalty);
  const TikhonovProblem prob = problem_for(b, oracle.alpha);
  const Reconstruction direct = solve_direct(prob);
  const Reconstruction cg = solve_cg(prob, 1e-8);
  EXPECT_TRUE(cg.converged);
  EXPECT_EQ(cg.solver_id, SolverId::Cg);
  EXPECT_GT(cg.iterations, 0);
  EXPECT_LE(relative_error(cg.x, direct.x, b.grid), 1e-6);
}

TEST(Solver, ConjugateGradientsReportNonConvergence) {
  const Benchmark b = make_benchmark(1.0, 0.05);
  const Reconstruction cg = solve_cg(problem_for(b, 1e-6), 1e-12, 1);
  EXPECT_FALSE(cg.converged);
  EXPECT_FALSE(cg.warnings.empty());
  EXPECT_TRUE(cg.x.allFinite());
}

TEST(Solver, ResidualAndPenaltyMonotoneInAlpha) {
  const Benchmark b = make_benchmark(1.0, 0.02);
  const NormalEquations eq(b.forward, b.penalty, b.y);
  double prev_res = -1.0, prev_pen = INFINITY;
  for (double alpha = 1e-8; alpha <= 1e2; alpha *= 10) {
    const Reconstruction rec = eq.solve_direct(alpha);
    EXPECT_GE(rec.residual_norm, prev_res * (1 - 1e-9)) << alpha;
    EXPECT_LE(rec.penalty_value, prev_pen * (1 + 1e-9)) << alpha;
    prev_res = rec.residual_norm;
    prev_pen = rec.penalty_value;
  }
}

TEST(Solver, CachedSystemMatchesFreeFunction) {
  const Benchmark b = make_benchmark(2.0, 0.01);
  const NormalEquations eq(b.forward, b.penalty, b.y);
  EXPECT_TRUE(eq.solve_direct(1e-5).x.isApprox(solve_direct(problem_for(b, 1e-5)).x, 1e-12));
  EXPECT_TRUE(solve_default(problem_for(b, 1e-5)).x.isApprox(eq.solve_direct(1e-5).x, 1e-12));
  EXPECT_EQ(solve_default(problem_for(b, 1e-5)).solver_id, SolverId::Direct);
}

TEST(Solver, Validation) {
  const Benchmark b = make_benchmark(1.0, 0.0);
  EXPECT_THROW(solve_direct(problem_for(b, 0.0)), ValidationError);
  EXPECT_THROW(solve_direct(problem_for(b, -1.0)), ValidationError);
  TikhonovProblem short_data = problem_for(b, 1e-3);
  short_data.data = Eigen::VectorXd::Zero(50);
  EXPECT_THROW(solve_direct(short_data), ValidationError);
  TikhonovProblem nan_data = problem_for(b, 1e-3);
  nan_data.data[3] = std::nan("");
  EXPECT_THROW(solve_direct(nan_data), ValidationError);
  const Benchmark other = make_benchmark(1.0, 0.0, 80);
  TikhonovProblem mismatch = problem_for(b, 1e-3);
  mismatch.penalty = other.penalty;
  EXPECT_THROW(solve_direct(mismatch), ValidationError);
  EXPECT_THROW(solve_cg(problem_for(b, 1e-3), 0.0), ValidationError);
}
