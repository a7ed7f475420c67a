#include "abelscale/grid.hpp"

#include <cmath>
#include <string>

#include "abelscale/error.hpp"

namespace abelscale {

Grid::Grid(int n, int max_nodes) : n_(n) {
  if (n < 2) throw ValidationError("grid needs at least 2 nodes, got " + std::to_string(n));
  if (n > max_nodes)
    throw ValidationError("grid size " + std::to_string(n) + " exceeds the limit of " +
                          std::to_string(max_nodes) + " nodes");
}

Eigen::VectorXd Grid::nodes() const {
  Eigen::VectorXd t(n_);
  for (int i = 0; i < n_; ++i) t[i] = node(i);
  return t;
}

Eigen::VectorXd Grid::sample(const std::function<double(double)>& f) const {
  Eigen::VectorXd v(n_);
  for (int i = 0; i < n_; ++i) v[i] = f(node(i));
  return v;
}

double weighted_norm(const Eigen::VectorXd& v, const Grid& grid) {
  return std::sqrt(grid.spacing()) * v.norm();
}

double weighted_dot(const Eigen::VectorXd& u, const Eigen::VectorXd& v, const Grid& grid) {
  return grid.spacing() * u.dot(v);
}

}  // namespace abelscale
