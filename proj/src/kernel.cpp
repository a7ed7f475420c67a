#include "abelscale/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "abelscale/error.hpp"
#include "abelscale/grid.hpp"

namespace abelscale {

const char* to_string(KernelId id) {
  switch (id) {
    case KernelId::Constant: return "constant";
    case KernelId::Stereology: return "stereology";
    case KernelId::Tabulated: return "tabulated";
    case KernelId::Callback: return "callback";
  }
  return "unknown";
}

Kernel::Kernel(KernelId id, std::string name, Function eval,
               std::function<double(int, double, double)> derivative, int derivative_order)
    : id_(id),
      name_(std::move(name)),
      eval_(std::move(eval)),
      derivative_(std::move(derivative)),
      derivative_order_(derivative_order) {}

Kernel Kernel::constant() {
  return Kernel(
      KernelId::Constant, "constant", [](double, double) { return 1.0; },
      [](int m, double, double) { return m == 0 ? 1.0 : 0.0; }, -1);
}

namespace {

double stereology_value(double t, double s) {
  if (s == 0.0) return 1.0;
  if (s == t) return 1.0 / std::sqrt(2.0);
  return std::sqrt(t) / std::sqrt(t + s);
}

// d^m/ds^m sqrt(t) (t + s)^(-1/2) = sqrt(t) prod_{l<m} (-(2l + 1)/2) (t + s)^(-1/2 - m)
double stereology_derivative(int m, double t, double s) {
  if (m == 0) return stereology_value(t, s);
  double c = 1.0;
  for (int l = 0; l < m; ++l) c *= -(2.0 * l + 1.0) / 2.0;
  return c * std::sqrt(t) * std::pow(t + s, -0.5 - m);
}

}  // namespace

Kernel Kernel::stereology() {
  return Kernel(KernelId::Stereology, "stereology", stereology_value, stereology_derivative, -1);
}

Kernel Kernel::callback(std::string name, Function eval, std::vector<Function> s_derivatives) {
  if (!eval) throw ValidationError("callback kernel needs an evaluator");
  const int order = static_cast<int>(s_derivatives.size());
  auto derivative = [eval, ds = std::move(s_derivatives)](int m, double t, double s) {
    return m == 0 ? eval(t, s) : ds[m - 1](t, s);
  };
  return Kernel(KernelId::Callback, std::move(name), eval, derivative, order);
}

Kernel Kernel::tabulated(const Eigen::MatrixXd& values) {
  const Eigen::Index m = values.rows();
  if (m < 2 || values.cols() != m)
    throw ValidationError("tabulated kernel needs a square table with at least 2 points per axis");
  Eigen::MatrixXd table = values;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j <= i; ++j)
      if (!std::isfinite(table(i, j)))
        throw ValidationError("tabulated kernel has a non-finite value at (" + std::to_string(i) +
                              ", " + std::to_string(j) + ")");
  // Fill the first super-diagonal so that bilinear interpolation in diagonal
  // cells reduces to linear interpolation of the three lower corners.
  for (Eigen::Index i = 0; i + 1 < m; ++i)
    table(i, i + 1) = table(i, i) + table(i + 1, i + 1) - table(i + 1, i);
  auto eval = [table](double t, double s) {
    const Eigen::Index m = table.rows();
    const double h = 1.0 / static_cast<double>(m - 1);
    t = std::clamp(t, 0.0, 1.0);
    s = std::clamp(s, 0.0, t);
    const Eigen::Index i = std::min<Eigen::Index>(static_cast<Eigen::Index>(t / h), m - 2);
    Eigen::Index j = std::min<Eigen::Index>(static_cast<Eigen::Index>(s / h), m - 2);
    j = std::min(j, i);
    const double x = t / h - static_cast<double>(i);
    const double y = s / h - static_cast<double>(j);
    return table(i, j) * (1 - x) * (1 - y) + table(i + 1, j) * x * (1 - y) +
           table(i, j + 1) * (1 - x) * y + table(i + 1, j + 1) * x * y;
  };
  auto derivative = [eval](int m, double t, double s) {
    if (m == 0) return eval(t, s);
    throw ValidationError("tabulated kernels have no analytic derivatives");
  };
  return Kernel(KernelId::Tabulated, "tabulated", eval, derivative, 0);
}

double Kernel::at_nodes(int i, int j, const Grid& grid) const {
  if (id_ == KernelId::Stereology) {
    if (j == 0) return 1.0;
    if (i == j) return 1.0 / std::sqrt(2.0);
    return std::sqrt(static_cast<double>(i)) / std::sqrt(static_cast<double>(i + j));
  }
  return eval_(grid.node(i), grid.node(j));
}

bool Kernel::has_s_derivative(int m) const {
  return m == 0 || derivative_order_ < 0 || m <= derivative_order_;
}

double Kernel::s_derivative(int m, double t, double s) const {
  if (m < 0) throw ValidationError("derivative order must be non-negative");
  if (!has_s_derivative(m))
    throw ValidationError("kernel '" + name_ + "' has no analytic s-derivative of order " +
                          std::to_string(m));
  return derivative_(m, t, s);
}

}  // namespace abelscale
