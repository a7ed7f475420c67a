#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "abelscale/grid.hpp"
#include "abelscale/kernel.hpp"

namespace abelscale {

/**
 * Discretized Abel operator  (T_a x)(t) = int_0^t (t - s)^(a-1) k(t, s) x(s) ds.
 *
 * The matrix is lower triangular and its first row is zero (y(0) = 0 for every
 * Abel transform). Instances are immutable and safe to share between threads.
 */
class ForwardOperator {
 public:
  ForwardOperator(double order, Grid grid, KernelId kernel_id, std::string kernel_name,
                  Eigen::MatrixXd matrix);

  double order() const { return order_; }
  const Grid& grid() const { return grid_; }
  KernelId kernel_id() const { return kernel_id_; }
  const std::string& kernel_name() const { return kernel_name_; }
  const Eigen::MatrixXd& matrix() const { return matrix_; }

 private:
  double order_;
  Grid grid_;
  KernelId kernel_id_;
  std::string kernel_name_;
  Eigen::MatrixXd matrix_;
};

/**
 * First-order trapezoidal discretization: the integrand's x-part is averaged
 * over each cell while (t_i - s)^(a-1) is integrated exactly, giving the weights
 *
 *   c [(i-j+1)^a - (i-j-1)^a]   0 < j < i
 *   c [i^a - (i-1)^a]           j = 0 < i
 *   c                           j = i > 0
 *
 * with c = dt^a / (2a), each multiplied by k(t_i, t_j).
 */
ForwardOperator build_abel_matrix(double a, const Grid& grid, const Kernel& kernel);

/// y = T x. Throws ValidationError on a dimension mismatch.
Eigen::VectorXd apply_forward(const ForwardOperator& op, const Eigen::VectorXd& x);

/// Row i of the trapezoidal scheme evaluated without storing the matrix.
double abel_row_apply(double a, const Grid& grid, const Kernel& kernel, int row,
                      const Eigen::VectorXd& x);

struct ConvergenceEstimate {
  std::vector<int> sizes;
  std::vector<double> errors;  ///< weighted L2 error per size
  std::vector<double> orders;  ///< log(e_k / e_{k+1}) / log(n_{k+1} / n_k)
  std::optional<double> order; ///< mean of `orders`; empty when the scheme is exact
  bool exact = false;
};

/**
 * Observed order of the forward discretization for a smooth x.
 *
 * The reference is `exact_y` when given, otherwise the same scheme on a grid
 * ten times finer than the largest size (which must then be a multiple of every size).
 * Errors at or below 1e-12 relative to the reference norm report `exact`.
 */
ConvergenceEstimate convergence_order(double a, const Kernel& kernel,
                                      const std::function<double(double)>& x,
                                      std::span<const int> sizes,
                                      const std::function<double(double)>& exact_y = {});

}  // namespace abelscale
