#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "abelscale/hilbert_scale.hpp"
#include "abelscale/operators.hpp"

namespace abelscale {

/// min ||T x - y||^2 + alpha ||x||^2_{r,p} for one data vector.
struct TikhonovProblem {
  std::shared_ptr<const ForwardOperator> forward;
  std::shared_ptr<const PenaltyMatrix> penalty;
  double alpha = 1.0;
  Eigen::VectorXd data;

  /// Throws ValidationError on dimension mismatch or alpha <= 0.
  void validate() const;
};

enum class SolverId { Direct, Cg };

const char* to_string(SolverId id);

struct Reconstruction {
  Eigen::VectorXd x;
  double residual_norm = 0.0;   ///< weighted ||T x - y||
  double penalty_value = 0.0;   ///< dt x^T P x
  double normal_residual = 0.0; ///< ||(T^T T + alpha P) x - T^T y|| / ||T^T y||
  SolverId solver_id = SolverId::Direct;
  int iterations = 0;
  double ridge = 0.0;           ///< diagonal shift added when the factorization failed
  bool converged = true;
  std::vector<std::string> warnings;
};

/**
 * Cached T^T T and T^T y for repeated solves with the same forward operator,
 * penalty and data while alpha varies.
 */
class NormalEquations {
 public:
  NormalEquations(std::shared_ptr<const ForwardOperator> forward,
                  std::shared_ptr<const PenaltyMatrix> penalty, Eigen::VectorXd data);

  const ForwardOperator& forward() const { return *forward_; }
  const PenaltyMatrix& penalty() const { return *penalty_; }
  const Eigen::VectorXd& data() const { return data_; }
  const Eigen::MatrixXd& gram() const { return gram_; }
  const Eigen::VectorXd& rhs() const { return rhs_; }

  /// See the free function solve_direct.
  Reconstruction solve_direct(double alpha) const;
  Reconstruction solve_cg(double alpha, double tol, int max_iter) const;

  /// Fills residual_norm, penalty_value and normal_residual for a given x.
  void evaluate(Reconstruction& rec, double alpha) const;

 private:
  std::shared_ptr<const ForwardOperator> forward_;
  std::shared_ptr<const PenaltyMatrix> penalty_;
  Eigen::VectorXd data_;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd rhs_;
};

/// Below this reciprocal condition estimate the direct solver switches from Cholesky to QR.
inline constexpr double kNormalEquationsMinRcond = 1e-8;

/**
 * Cholesky on the normal equations with two steps of iterative refinement, or a
 * column-pivoted QR of the stacked least-squares system when they are ill-conditioned.
 */
Reconstruction solve_direct(const TikhonovProblem& problem);

/// Jacobi-preconditioned conjugate gradients, stopped at ||r|| <= tol ||T^T y||.
Reconstruction solve_cg(const TikhonovProblem& problem, double tol = 1e-10, int max_iter = 10000);

/// Largest n solved directly by solve_default.
inline constexpr int kDirectSolverMaxNodes = 2000;

Reconstruction solve_default(const TikhonovProblem& problem);

}  // namespace abelscale
