#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "abelscale/grid.hpp"
#include "abelscale/kernel.hpp"

namespace abelscale {

/**
 * Samples of the residual kernel h of the factorization
 * T_a = k(t,t) (Id - R_a) S_a, built from g(t,s) = (k(t,t) - k(t,s)) (t - s)^(a-1).
 *
 * h(i, j) holds h(t_i, t_j) for i - j >= band and j >= 1; every other entry is NaN.
 */
struct ResidualKernelSamples {
  double a = 1.0;
  int fine_n = 0;
  int band = 2;
  Eigen::MatrixXd h;
  bool finite_difference_derivatives = false;
  std::vector<std::string> notes;
};

ResidualKernelSamples residual_kernel(const Kernel& kernel, double a, const Grid& fine_grid);

enum class Verdict { Yes, No, Inconclusive };

const char* to_string(Verdict v);

struct ResidualKernelReport {
  double a = 1.0;
  int fine_n = 0;
  double hs_norm_estimate = 0.0;  ///< ||h|| over the resolved region; +inf if non-finite
  double band_bound = 0.0;        ///< estimated contribution of the excluded diagonal band
  double coarse_estimate = 0.0;   ///< same estimate at half resolution
  bool refinement_stable = true;
  Verdict condition_met = Verdict::Inconclusive;
  std::vector<std::string> flags;  ///< divergence indicators
  std::vector<std::string> notes;
  ResidualKernelSamples samples;
};

/**
 * Hilbert-Schmidt test ||h||_{L2(Omega)} < 1 for the residual operator.
 * Yes requires no divergence flags, a stable refinement and estimate + band bound < 1;
 * No is reported for an estimate of at least 1; anything else is inconclusive.
 */
ResidualKernelReport hs_condition_check(const Kernel& kernel, double a, const Grid& fine_grid);

}  // namespace abelscale
