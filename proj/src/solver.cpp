#include "abelscale/solver.hpp"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/IterativeLinearSolvers>

#include "abelscale/error.hpp"

namespace abelscale {

const char* to_string(SolverId id) {
  switch (id) {
    case SolverId::Direct: return "direct";
    case SolverId::Cg: return "cg";
  }
  return "unknown";
}

void TikhonovProblem::validate() const {
  if (!forward || !penalty) throw ValidationError("problem needs a forward operator and a penalty");
  const int n = forward->grid().size();
  if (penalty->matrix().rows() != n)
    throw ValidationError("penalty size " + std::to_string(penalty->matrix().rows()) +
                          " does not match the forward operator size " + std::to_string(n));
  if (data.size() != n)
    throw ValidationError("data has " + std::to_string(data.size()) + " samples, expected " +
                          std::to_string(n));
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw ValidationError("regularization parameter alpha must be positive");
  if (!data.allFinite()) throw ValidationError("data contains non-finite values");
}

NormalEquations::NormalEquations(std::shared_ptr<const ForwardOperator> forward,
                                 std::shared_ptr<const PenaltyMatrix> penalty, Eigen::VectorXd data)
    : forward_(std::move(forward)), penalty_(std::move(penalty)), data_(std::move(data)) {
  TikhonovProblem{forward_, penalty_, 1.0, data_}.validate();
  const Eigen::MatrixXd& t = forward_->matrix();
  gram_ = t.transpose() * t;
  rhs_ = t.transpose() * data_;
}

void NormalEquations::evaluate(Reconstruction& rec, double alpha) const {
  const Grid& grid = forward_->grid();
  rec.residual_norm = weighted_norm(forward_->matrix() * rec.x - data_, grid);
  rec.penalty_value = penalty_->value(rec.x);
  const Eigen::VectorXd r = gram_ * rec.x + alpha * (penalty_->matrix() * rec.x) - rhs_;
  const double scale = rhs_.norm();
  rec.normal_residual = scale > 0.0 ? r.norm() / scale : r.norm();
}

Reconstruction NormalEquations::solve_direct(double alpha) const {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw ValidationError("regularization parameter alpha must be positive");
  Eigen::MatrixXd a = gram_ + alpha * penalty_->matrix();
  Reconstruction rec;
  rec.solver_id = SolverId::Direct;

  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() == Eigen::Success && llt.rcond() >= kNormalEquationsMinRcond) {
    rec.x = llt.solve(rhs_);
    for (int step = 0; step < 2; ++step) rec.x += llt.solve(rhs_ - a * rec.x);
  } else {
    // Ill-conditioned normal equations: least squares on [T; sqrt(alpha) L] x = [y; 0].
    const Eigen::MatrixXd& t = forward_->matrix();
    const Eigen::MatrixXd& l = penalty_->factor();
    Eigen::MatrixXd stacked(t.rows() + l.rows(), t.cols());
    stacked << t, std::sqrt(alpha) * l;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(stacked.rows());
    b.head(t.rows()) = data_;
    rec.x = stacked.colPivHouseholderQr().solve(b);
  }
  if (!rec.x.allFinite()) {
    rec.ridge = 1e-14 * a.trace();
    a.diagonal().array() += rec.ridge;
    llt.compute(a);
    if (llt.info() != Eigen::Success)
      throw NumericalError("normal equations are not positive definite even after a ridge of " +
                           std::to_string(rec.ridge));
    rec.x = llt.solve(rhs_);
    rec.warnings.push_back("direct solve failed; added ridge " + std::to_string(rec.ridge));
  }
  if (!rec.x.allFinite()) throw NumericalError("direct solve produced non-finite values");
  evaluate(rec, alpha);
  return rec;
}

Reconstruction NormalEquations::solve_cg(double alpha, double tol, int max_iter) const {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw ValidationError("regularization parameter alpha must be positive");
  if (!(tol > 0.0)) throw ValidationError("CG tolerance must be positive");
  if (max_iter < 1) throw ValidationError("CG needs at least one iteration");
  const Eigen::MatrixXd a = gram_ + alpha * penalty_->matrix();
  Reconstruction rec;
  rec.solver_id = SolverId::Cg;

  Eigen::ConjugateGradient<Eigen::MatrixXd, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(tol);
  cg.setMaxIterations(max_iter);
  cg.compute(a);
  rec.x = cg.solve(rhs_);
  rec.iterations = static_cast<int>(cg.iterations());
  if (!rec.x.allFinite()) throw NumericalError("CG produced non-finite values");
  evaluate(rec, alpha);
  // Restart from the current iterate when the recursively updated residual
  // has drifted below the true one.
  for (int restart = 0; restart < 3 && rec.normal_residual > tol && rec.iterations < max_iter;
       ++restart) {
    cg.setMaxIterations(max_iter - rec.iterations);
    rec.x = cg.solveWithGuess(rhs_, rec.x);
    rec.iterations += static_cast<int>(cg.iterations());
    if (!rec.x.allFinite()) throw NumericalError("CG produced non-finite values");
    evaluate(rec, alpha);
  }
  if (cg.info() != Eigen::Success || rec.normal_residual > tol) {
    rec.converged = false;
    rec.warnings.push_back("CG stopped after " + std::to_string(rec.iterations) +
                           " iterations with relative residual " + std::to_string(rec.normal_residual));
  }
  return rec;
}

Reconstruction solve_direct(const TikhonovProblem& problem) {
  problem.validate();
  return NormalEquations(problem.forward, problem.penalty, problem.data).solve_direct(problem.alpha);
}

Reconstruction solve_cg(const TikhonovProblem& problem, double tol, int max_iter) {
  problem.validate();
  return NormalEquations(problem.forward, problem.penalty, problem.data)
      .solve_cg(problem.alpha, tol, max_iter);
}

Reconstruction solve_default(const TikhonovProblem& problem) {
  problem.validate();
  if (problem.forward->grid().size() <= kDirectSolverMaxNodes) return solve_direct(problem);
  return solve_cg(problem);
}

}  // namespace abelscale
