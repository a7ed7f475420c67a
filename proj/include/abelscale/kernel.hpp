#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace abelscale {

class Grid;

enum class KernelId { Constant, Stereology, Tabulated, Callback };

const char* to_string(KernelId id);

/**
 * Kernel k(t, s) of an Abel operator, defined on the closed triangle 0 <= s <= t <= 1.
 *
 * A kernel may carry analytic s-derivatives. When an order is missing the
 * residual-kernel diagnostics fall back to finite differences.
 *
 * Kernels are cheap to copy; the evaluators are shared.
 */
class Kernel {
 public:
  using Function = std::function<double(double, double)>;

  /// k = 1. All s-derivatives vanish.
  static Kernel constant();

  /// k(t, s) = sqrt(t) / sqrt(t + s), with k(t, t) = 1/sqrt(2) and k(t, 0) = 1 by continuity.
  static Kernel stereology();

  /// User supplied evaluator. s_derivatives[m - 1] evaluates the m-th s-derivative.
  static Kernel callback(std::string name, Function eval, std::vector<Function> s_derivatives = {});

  /**
   * Samples on the uniform grid u_i = i / (m - 1), i = 0..m-1 (both end points included).
   * values(i, j) holds k(u_i, u_j) for j <= i; entries above the diagonal are ignored.
   * Evaluation is bilinear.
   */
  static Kernel tabulated(const Eigen::MatrixXd& values);

  KernelId id() const { return id_; }
  const std::string& name() const { return name_; }

  double operator()(double t, double s) const { return eval_(t, s); }

  /// k(t_i, t_j) on the grid. The stereology kernel uses the exact node ratio sqrt(i)/sqrt(i+j).
  double at_nodes(int i, int j, const Grid& grid) const;

  /// Highest s-derivative order available analytically; -1 means every order.
  int analytic_derivative_order() const { return derivative_order_; }
  bool has_s_derivative(int m) const;

  /// Analytic m-th s-derivative; throws ValidationError when unavailable. m = 0 returns k.
  double s_derivative(int m, double t, double s) const;

 private:
  Kernel(KernelId id, std::string name, Function eval,
         std::function<double(int, double, double)> derivative, int derivative_order);

  KernelId id_;
  std::string name_;
  Function eval_;
  std::function<double(int, double, double)> derivative_;
  int derivative_order_;
};

}  // namespace abelscale
