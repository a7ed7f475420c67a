#pragma once

#include <functional>

#include <Eigen/Dense>

namespace abelscale {

/// Upper bound on the node count of dense operators; an n-node grid costs n^2 doubles per matrix.
inline constexpr int kDefaultMaxNodes = 5000;

/**
 * Uniform partition of [0, 1] with n nodes t_i = i / n, i = 0..n-1.
 *
 * The right end point t = 1 is not a node; it is the location of the first
 * ghost node used by the boundary closures of the scale operators.
 */
class Grid {
 public:
  explicit Grid(int n, int max_nodes = kDefaultMaxNodes);

  int size() const { return n_; }
  double spacing() const { return 1.0 / n_; }
  double node(int i) const { return static_cast<double>(i) / n_; }

  Eigen::VectorXd nodes() const;
  Eigen::VectorXd sample(const std::function<double(double)>& f) const;

  bool operator==(const Grid& other) const { return n_ == other.n_; }

 private:
  int n_;
};

/// Discrete L2 norm with the grid weight: ||v||^2 = dt * sum v_i^2.
double weighted_norm(const Eigen::VectorXd& v, const Grid& grid);

/// Discrete L2 inner product with the same weight.
double weighted_dot(const Eigen::VectorXd& u, const Eigen::VectorXd& v, const Grid& grid);

}  // namespace abelscale
