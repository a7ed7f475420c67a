#include "abelscale/hilbert_scale.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "abelscale/error.hpp"
#include "abelscale/operators.hpp"
#include "rational.hpp"

namespace abelscale {

using detail::Rational;

ScaleOperator::ScaleOperator(int r, Grid grid, Eigen::MatrixXd stencil, bool experimental)
    : r_(r), grid_(grid), stencil_(std::move(stencil)), experimental_(experimental) {}

double ScaleOperator::scale() const { return std::pow(static_cast<double>(grid_.size()), 2 * r_); }

namespace {

// Coefficients of a linear combination of node values, keyed by node index.
// Negative indices and indices >= n are ghost nodes.
using LinearForm = std::map<int, Rational>;

std::int64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::int64_t c = 1;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

void accumulate(LinearForm& form, int index, const Rational& c) {
  Rational& slot = form[index];
  slot += c;
  if (slot.is_zero()) form.erase(index);
}

// Central difference for the k-th derivative at node b with spacing s (unscaled).
LinearForm central_difference(int b, int k, int s) {
  LinearForm form;
  if (k == 0) {
    form[b] = Rational(1);
    return form;
  }
  const int even = k % 2 == 0 ? k : k - 1;
  auto add_even = [&](int centre, int sign) {
    for (int m = 0; m <= even; ++m) {
      const std::int64_t c = (m % 2 == 0 ? 1 : -1) * binomial(even, m) * sign;
      accumulate(form, centre + s * (even / 2 - m), Rational(c));
    }
  };
  if (k % 2 == 0) {
    add_even(b, 1);
  } else {
    add_even(b + s, 1);
    add_even(b - s, -1);
  }
  return form;
}

// Order-2 weights for the k-th derivative at b from the k + 2 nodes first..first+k+1,
// from the moment conditions sum_m w_m (x_m - b)^j / j! = [j == k].
LinearForm window_difference(int b, int k, int first) {
  const int m = k + 2;
  std::vector<std::vector<Rational>> a(m, std::vector<Rational>(m + 1));
  for (int j = 0; j < m; ++j) {
    Rational fact(1);
    for (int l = 2; l <= j; ++l) fact = fact * Rational(l);
    for (int c = 0; c < m; ++c) {
      Rational pw(1);
      for (int l = 0; l < j; ++l) pw = pw * Rational(first + c - b);
      a[j][c] = pw / fact;
    }
    a[j][m] = Rational(j == k ? 1 : 0);
  }
  for (int c = 0; c < m; ++c) {
    int pivot = c;
    while (a[pivot][c].is_zero()) ++pivot;
    std::swap(a[c], a[pivot]);
    for (int i = 0; i < m; ++i) {
      if (i == c || a[i][c].is_zero()) continue;
      const Rational f = a[i][c] / a[c][c];
      for (int l = c; l <= m; ++l) a[i][l] -= f * a[c][l];
    }
  }
  LinearForm form;
  for (int c = 0; c < m; ++c) accumulate(form, first + c, a[c][m] / a[c][c]);
  return form;
}

int rank_of(std::vector<std::vector<Rational>> rows) {
  if (rows.empty()) return 0;
  const std::size_t cols = rows.front().size();
  int rank = 0;
  for (std::size_t c = 0; c < cols && rank < static_cast<int>(rows.size()); ++c) {
    std::size_t pivot = rank;
    while (pivot < rows.size() && rows[pivot][c].is_zero()) ++pivot;
    if (pivot == rows.size()) continue;
    std::swap(rows[rank], rows[pivot]);
    for (std::size_t i = rank + 1; i < rows.size(); ++i) {
      if (rows[i][c].is_zero()) continue;
      const Rational f = rows[i][c] / rows[rank][c];
      for (std::size_t j = c; j < cols; ++j) rows[i][j] -= f * rows[rank][j];
    }
    ++rank;
  }
  return rank;
}

/**
 * Expresses the ghost nodes through real nodes. Each boundary condition is the
 * central difference of the given order at `boundary`; among the admissible
 * spacings the smallest one that adds a new constraint on the ghosts is used.
 */
std::map<int, LinearForm> eliminate_ghosts(int boundary, const std::vector<int>& orders,
                                           const std::vector<int>& ghosts, int lowest, int highest) {
  const std::size_t g = ghosts.size();
  std::vector<LinearForm> conditions;
  std::vector<std::vector<Rational>> ghost_rows;
  auto try_accept = [&](LinearForm form) {
    std::vector<Rational> row(g);
    for (std::size_t c = 0; c < g; ++c)
      if (auto it = form.find(ghosts[c]); it != form.end()) row[c] = it->second;
    auto trial = ghost_rows;
    trial.push_back(row);
    if (rank_of(trial) <= static_cast<int>(ghost_rows.size())) return false;
    ghost_rows = std::move(trial);
    conditions.push_back(std::move(form));
    return true;
  };
  for (int k : orders) {
    bool found = false;
    for (int s = 1; !found; ++s) {
      LinearForm form = central_difference(boundary, k, s);
      if (form.begin()->first < lowest || form.rbegin()->first > highest) break;
      found = try_accept(std::move(form));
    }
    // Off-centre windows of k + 2 nodes, nearest to centred first.
    std::vector<int> starts;
    for (int first = lowest; first + k + 1 <= highest; ++first) starts.push_back(first);
    std::stable_sort(starts.begin(), starts.end(), [&](int x, int y) {
      return std::abs(2 * x + k + 1 - 2 * boundary) < std::abs(2 * y + k + 1 - 2 * boundary);
    });
    for (std::size_t w = 0; w < starts.size() && !found; ++w)
      found = try_accept(window_difference(boundary, k, starts[w]));
    if (!found)
      throw NumericalError("no admissible closure for the derivative condition of order " +
                           std::to_string(k));
  }

  // Gauss-Jordan on the conditions, pivoting on the ghost columns.
  for (std::size_t c = 0; c < g; ++c) {
    std::size_t pivot = c;
    while (pivot < g && !conditions[pivot].contains(ghosts[c])) ++pivot;
    if (pivot == g) throw NumericalError("singular ghost-node system");
    std::swap(conditions[c], conditions[pivot]);
    const Rational lead = conditions[c].at(ghosts[c]);
    for (auto& [idx, v] : conditions[c]) v = v / lead;
    for (std::size_t i = 0; i < g; ++i) {
      if (i == c) continue;
      auto it = conditions[i].find(ghosts[c]);
      if (it == conditions[i].end()) continue;
      const Rational f = it->second;
      for (const auto& [idx, v] : conditions[c]) accumulate(conditions[i], idx, -(f * v));
    }
  }

  std::map<int, LinearForm> out;
  for (std::size_t c = 0; c < g; ++c) {
    LinearForm value;
    for (const auto& [idx, v] : conditions[c])
      if (idx != ghosts[c]) value[idx] = -v;
    out[ghosts[c]] = std::move(value);
  }
  return out;
}

}  // namespace

ScaleOperator build_scale_operator(int r, const Grid& grid) {
  if (r < 1) throw ValidationError("scale index r must be at least 1");
  const int n = grid.size();
  if (n < 2 * r + 2)
    throw ValidationError("grid of " + std::to_string(n) + " nodes is too small for r = " +
                          std::to_string(r) + " (need at least " + std::to_string(2 * r + 2) + ")");

  // Left: x^(k)(0) = 0 for k = r..2r-1, ghosts -1..-r.
  std::vector<int> left_orders, left_ghosts, right_orders, right_ghosts;
  for (int k = r; k < 2 * r; ++k) left_orders.push_back(k);
  for (int m = 1; m <= r; ++m) left_ghosts.push_back(-m);
  // Right: x^(k)(1) = 0 for k = 0..r-1; node n sits at t = 1, ghosts n..n+r-1.
  for (int k = 0; k < r; ++k) right_orders.push_back(k);
  for (int m = 0; m < r; ++m) right_ghosts.push_back(n + m);

  std::map<int, LinearForm> ghosts = eliminate_ghosts(0, left_orders, left_ghosts, -r, n - 1);
  ghosts.merge(eliminate_ghosts(n, right_orders, right_ghosts, 0, n + r - 1));

  Eigen::MatrixXd stencil = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    LinearForm row;
    for (int k = -r; k <= r; ++k) {
      const Rational c((k % 2 == 0 ? 1 : -1) * binomial(2 * r, r + k));
      const int idx = i + k;
      if (idx >= 0 && idx < n) {
        accumulate(row, idx, c);
      } else {
        for (const auto& [j, v] : ghosts.at(idx)) accumulate(row, j, c * v);
      }
    }
    for (const auto& [j, v] : row) stencil(i, j) = v.to_double();
  }
  return ScaleOperator(r, grid, std::move(stencil), r > 3);
}

Eigen::MatrixXd sym_fractional_power(const Eigen::MatrixXd& m, double s) {
  if (m.rows() != m.cols() || m.rows() == 0) throw ValidationError("matrix must be square");
  if (!(s >= 0.0) || !std::isfinite(s)) throw ValidationError("power must be finite and non-negative");
  if (!m.allFinite()) throw ValidationError("matrix has non-finite entries");
  const double norm = m.norm();
  if ((m - m.transpose()).norm() > 1e-8 * norm)
    throw ValidationError("matrix is not symmetric within relative tolerance 1e-8");
  const Eigen::Index n = m.rows();
  if (s == 0.0) return Eigen::MatrixXd::Identity(n, n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
  if (eig.info() != Eigen::Success) throw NumericalError("symmetric eigendecomposition failed");
  Eigen::VectorXd lambda = eig.eigenvalues();
  const double top = lambda.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (lambda[i] < 0.0) {
      if (lambda[i] < -1e-12 * top)
        throw ValidationError("matrix is not positive semidefinite (eigenvalue " +
                              std::to_string(lambda[i]) + ")");
      lambda[i] = 0.0;
    }
    lambda[i] = std::pow(lambda[i], s);
  }
  const Eigen::MatrixXd& q = eig.eigenvectors();
  Eigen::MatrixXd out = q * lambda.asDiagonal() * q.transpose();
  return 0.5 * (out + out.transpose());
}

PenaltyMatrix::PenaltyMatrix(int r, double p, Grid grid, Eigen::MatrixXd matrix, bool experimental,
                             Eigen::MatrixXd factor)
    : r_(r), p_(p), grid_(grid), matrix_(std::move(matrix)), experimental_(experimental),
      factor_(std::move(factor)) {
  const int n = grid_.size();
  if (matrix_.rows() != n || matrix_.cols() != n)
    throw ValidationError("penalty matrix does not match the grid");
  if (factor_.size() == 0) {
    factor_ = sym_fractional_power(matrix_, 0.5);
  } else if (factor_.cols() != n) {
    throw ValidationError("penalty factor does not match the grid");
  }
}

double PenaltyMatrix::value(const Eigen::VectorXd& x) const {
  if (x.size() != matrix_.rows()) throw ValidationError("vector does not match the penalty size");
  return grid_.spacing() * x.dot(matrix_ * x);
}

PenaltyMatrix build_penalty(int r, double p, const Grid& grid) {
  if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("penalty order p must be non-negative");
  const ScaleOperator b = build_scale_operator(r, grid);
  const int n = grid.size();
  if (p == 0.0) {
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
    return PenaltyMatrix(r, p, grid, id, b.experimental(), id);
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(b.stencil(), Eigen::ComputeFullV);
  if (svd.info() != Eigen::Success) throw NumericalError("singular value decomposition failed");
  Eigen::VectorXd w = svd.singularValues();
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = std::pow(w[i], p / (2.0 * r));
  const Eigen::MatrixXd& v = svd.matrixV();
  const double np = std::pow(static_cast<double>(n), p);
  Eigen::MatrixXd factor = np * (w.asDiagonal() * v.transpose());
  const Eigen::MatrixXd m = factor.transpose() * factor;
  Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  return PenaltyMatrix(r, p, grid, std::move(sym), b.experimental(), std::move(factor));
}

double discrete_factorization_residual(int r, const Grid& grid, const Eigen::VectorXd& x) {
  if (x.size() != grid.size()) throw ValidationError("vector does not match the grid");
  const double xn = weighted_norm(x, grid);
  if (xn == 0.0) return 0.0;
  const ScaleOperator b = build_scale_operator(r, grid);
  const Eigen::MatrixXd s = build_abel_matrix(r, grid, Kernel::constant()).matrix();
  double fact = 1.0;
  for (int k = 2; k < r; ++k) fact *= k;
  const Eigen::VectorXd bx = b.matrix() * x;
  const Eigen::VectorXd v = s.transpose() * (s * bx) / (fact * fact);
  return weighted_norm(v - x, grid) / xn;
}

}  // namespace abelscale
