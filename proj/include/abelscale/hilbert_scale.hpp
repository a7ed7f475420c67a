#pragma once

#include <Eigen/Dense>

#include "abelscale/grid.hpp"

namespace abelscale {

/**
 * Finite-difference discretization of B_r = (-1)^r d^{2r}/dt^{2r} on [0, 1] with
 *
 *   x^(k)(0) = 0 for r <= k < 2r,   x^(k)(1) = 0 for k < r,
 *
 * closed at both ends by eliminating ghost nodes. Node 0 sits at t = 0; the
 * first ghost on the right sits at t = 1. The matrix is stored as an integer
 * stencil together with the factor n^{2r}.
 */
class ScaleOperator {
 public:
  ScaleOperator(int r, Grid grid, Eigen::MatrixXd stencil, bool experimental);

  int r() const { return r_; }
  const Grid& grid() const { return grid_; }

  /// Integer-valued matrix, equal to matrix() * dt^{2r}.
  const Eigen::MatrixXd& stencil() const { return stencil_; }
  double scale() const;
  Eigen::MatrixXd matrix() const { return stencil_ * scale(); }

  /// Set for r > 3, where no reference closure exists.
  bool experimental() const { return experimental_; }

 private:
  int r_;
  Grid grid_;
  Eigen::MatrixXd stencil_;
  bool experimental_;
};

/// Requires r >= 1 and n >= 2r + 2.
ScaleOperator build_scale_operator(int r, const Grid& grid);

/**
 * M^s for symmetric positive semidefinite M via the symmetric eigendecomposition.
 * Eigenvalues in [-1e-12 lambda_max, 0) are clamped to zero; anything more
 * negative is rejected, as is relative asymmetry above 1e-8.
 */
Eigen::MatrixXd sym_fractional_power(const Eigen::MatrixXd& m, double s);

/// (B_r^T B_r)^{p / 2r}, the Gram matrix of the Hilbert-scale norm ||x||_{r,p}.
class PenaltyMatrix {
 public:
  /// An empty `factor` is computed from the symmetric eigendecomposition of `matrix`.
  PenaltyMatrix(int r, double p, Grid grid, Eigen::MatrixXd matrix, bool experimental,
                Eigen::MatrixXd factor = {});

  int r() const { return r_; }
  double p() const { return p_; }
  const Grid& grid() const { return grid_; }
  const Eigen::MatrixXd& matrix() const { return matrix_; }
  /// L with L^T L = P.
  const Eigen::MatrixXd& factor() const { return factor_; }
  bool experimental() const { return experimental_; }

  /// dt * x^T P x.
  double value(const Eigen::VectorXd& x) const;

 private:
  int r_;
  double p_;
  Grid grid_;
  Eigen::MatrixXd matrix_;
  bool experimental_;
  Eigen::MatrixXd factor_;
};

/**
 * Built from the singular value decomposition of the integer stencil,
 * (B^T B)^{p/2r} = V diag(sigma^{p/r}) V^T * n^{2p}, which avoids squaring
 * the condition number of B.
 */
PenaltyMatrix build_penalty(int r, double p, const Grid& grid);

/**
 * ||(1/(r-1)!^2) S^T S B x - x|| / ||x|| with S the order-r Abel matrix of the
 * constant kernel. Returns 0 for x = 0.
 */
double discrete_factorization_residual(int r, const Grid& grid, const Eigen::VectorXd& x);

}  // namespace abelscale
