#include "abelscale/operators.hpp"

#include <cmath>
#include <string>

#include "abelscale/error.hpp"

namespace abelscale {

ForwardOperator::ForwardOperator(double order, Grid grid, KernelId kernel_id,
                                 std::string kernel_name, Eigen::MatrixXd matrix)
    : order_(order),
      grid_(grid),
      kernel_id_(kernel_id),
      kernel_name_(std::move(kernel_name)),
      matrix_(std::move(matrix)) {
  if (matrix_.rows() != grid_.size() || matrix_.cols() != grid_.size())
    throw ValidationError("forward matrix does not match the grid size");
}

namespace {

void check_order(double a) {
  if (!(a > 0.0) || !std::isfinite(a))
    throw ValidationError("Abel order must be positive, got " + std::to_string(a));
}

Eigen::VectorXd power_table(double a, int n) {
  Eigen::VectorXd q(n + 1);
  for (int m = 0; m <= n; ++m) q[m] = std::pow(static_cast<double>(m), a);
  return q;
}

// Unscaled trapezoid weight of node j in row i (without dt^a / 2a).
double weight(const Eigen::VectorXd& q, int i, int j) {
  if (i == 0) return 0.0;
  if (j == 0) return q[i] - q[i - 1];
  if (j == i) return 1.0;
  return q[i - j + 1] - q[i - j - 1];
}

double kernel_at(const Kernel& kernel, int i, int j, const Grid& grid) {
  const double k = kernel.at_nodes(i, j, grid);
  if (!std::isfinite(k))
    throw ValidationError("kernel '" + kernel.name() + "' is not finite at (t, s) = (" +
                          std::to_string(grid.node(i)) + ", " + std::to_string(grid.node(j)) + ")");
  return k;
}

}  // namespace

ForwardOperator build_abel_matrix(double a, const Grid& grid, const Kernel& kernel) {
  check_order(a);
  const int n = grid.size();
  const double c = std::pow(grid.spacing(), a) / (2.0 * a);
  const Eigen::VectorXd q = power_table(a, n);
  const bool constant = kernel.id() == KernelId::Constant;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i)
    for (int j = 0; j <= i; ++j)
      m(i, j) = c * weight(q, i, j) * (constant ? 1.0 : kernel_at(kernel, i, j, grid));
  return ForwardOperator(a, grid, kernel.id(), kernel.name(), std::move(m));
}

Eigen::VectorXd apply_forward(const ForwardOperator& op, const Eigen::VectorXd& x) {
  if (x.size() != op.grid().size())
    throw ValidationError("input has " + std::to_string(x.size()) + " samples, grid has " +
                          std::to_string(op.grid().size()));
  Eigen::VectorXd y = op.matrix().triangularView<Eigen::Lower>() * x;
  y[0] = 0.0;
  return y;
}

double abel_row_apply(double a, const Grid& grid, const Kernel& kernel, int row,
                      const Eigen::VectorXd& x) {
  check_order(a);
  if (x.size() != grid.size()) throw ValidationError("input does not match the grid");
  if (row < 0 || row >= grid.size()) throw ValidationError("row out of range");
  if (row == 0) return 0.0;
  const double c = std::pow(grid.spacing(), a) / (2.0 * a);
  auto pw = [a](int m) { return std::pow(static_cast<double>(m), a); };
  const bool constant = kernel.id() == KernelId::Constant;
  auto k = [&](int j) { return constant ? 1.0 : kernel_at(kernel, row, j, grid); };
  double sum = (pw(row) - pw(row - 1)) * k(0) * x[0] + k(row) * x[row];
  for (int j = 1; j < row; ++j) sum += (pw(row - j + 1) - pw(row - j - 1)) * k(j) * x[j];
  return c * sum;
}

ConvergenceEstimate convergence_order(double a, const Kernel& kernel,
                                      const std::function<double(double)>& x,
                                      std::span<const int> sizes,
                                      const std::function<double(double)>& exact_y) {
  check_order(a);
  if (sizes.size() < 3) throw ValidationError("convergence_order needs at least 3 grid sizes");
  for (std::size_t k = 1; k < sizes.size(); ++k)
    if (sizes[k] <= sizes[k - 1]) throw ValidationError("grid sizes must be increasing");

  const int fine_n = 10 * sizes.back();
  std::optional<Grid> fine;
  Eigen::VectorXd fine_x;
  if (!exact_y) {
    for (int n : sizes)
      if (fine_n % n != 0)
        throw ValidationError("grid size " + std::to_string(n) + " does not divide the reference size " +
                              std::to_string(fine_n));
    fine.emplace(fine_n, fine_n);
    fine_x = fine->sample(x);
  }

  ConvergenceEstimate out;
  bool all_exact = true;
  for (int n : sizes) {
    const Grid grid(n, std::max(n, kDefaultMaxNodes));
    const Eigen::VectorXd y = apply_forward(build_abel_matrix(a, grid, kernel), grid.sample(x));
    Eigen::VectorXd ref(n);
    for (int i = 0; i < n; ++i)
      ref[i] = exact_y ? exact_y(grid.node(i))
                       : abel_row_apply(a, *fine, kernel, i * (fine_n / n), fine_x);
    const double err = weighted_norm(y - ref, grid);
    const double scale = weighted_norm(ref, grid);
    if (err > 1e-12 * std::max(scale, 1e-300)) all_exact = false;
    out.sizes.push_back(n);
    out.errors.push_back(err);
  }
  out.exact = all_exact;
  if (all_exact) return out;

  double total = 0.0;
  for (std::size_t k = 0; k + 1 < out.errors.size(); ++k) {
    const double o = std::log(out.errors[k] / out.errors[k + 1]) /
                     std::log(static_cast<double>(out.sizes[k + 1]) / out.sizes[k]);
    out.orders.push_back(o);
    total += o;
  }
  out.order = total / static_cast<double>(out.orders.size());
  return out;
}

}  // namespace abelscale
