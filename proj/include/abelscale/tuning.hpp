#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "abelscale/error.hpp"
#include "abelscale/kernel.hpp"
#include "abelscale/solver.hpp"

namespace abelscale {

/// Additive white Gaussian noise of standard deviation delta.
struct NoiseModel {
  double delta = 0.0;
  std::uint64_t seed = 0;
};

/// y + eta with eta_i ~ N(0, delta^2), drawn from mt19937_64 seeded with model.seed.
Eigen::VectorXd add_noise(const Eigen::VectorXd& y, const NoiseModel& model);

/// Logarithmic alpha sweep alpha_min * step^k up to alpha_max.
struct AlphaSweep {
  double alpha_min = 1e-16;
  double alpha_max = 1e4;
  double step_factor = 1.2589254117941673;  // 10^0.1
  int patience = 5;  ///< consecutive increases of the monitored quantity before a sweep stops

  void validate() const;
  std::vector<double> values() const;
};

struct OracleChoice {
  double alpha = 0.0;
  Reconstruction reconstruction;
  double error = 0.0;              ///< weighted ||x_alpha - x_true||
  std::vector<double> alphas;      ///< swept values, ascending
  std::vector<double> errors;
};

/**
 * Sweeps alpha upwards and keeps the minimizer of the reconstruction error.
 * Stops once the error has increased on `patience` consecutive steps.
 */
OracleChoice oracle_alpha(const NormalEquations& system, const Eigen::VectorXd& x_true,
                          const AlphaSweep& sweep = {});

OracleChoice oracle_alpha(const Eigen::VectorXd& x_true, const Eigen::VectorXd& y_noisy,
                          std::shared_ptr<const ForwardOperator> forward,
                          std::shared_ptr<const PenaltyMatrix> penalty,
                          const AlphaSweep& sweep = {});

/// Sample standard deviation of y_0 .. y_{prefix_len - 1}.
double estimate_noise_level(const Eigen::VectorXd& y, int prefix_len);

struct DiscrepancyChoice {
  double alpha = 0.0;
  Reconstruction reconstruction;
  double delta_hat = 0.0;       ///< per-sample noise estimate
  double delta_hat_norm = 0.0;  ///< delta_hat in the weighted norm, delta_hat * sqrt(n dt)
  double target = 0.0;          ///< tau * delta_hat_norm
  bool satisfied = true;        ///< false when no swept alpha met the target
  std::vector<double> alphas;
  std::vector<double> residuals;
};

inline constexpr double kDefaultTau = 1.1;

/**
 * Largest swept alpha whose residual stays within tau * delta_hat_norm.
 * Falls back to the alpha with residual closest to the target, clearing
 * `satisfied` and adding a warning to the reconstruction.
 */
DiscrepancyChoice discrepancy_alpha(const NormalEquations& system, int quiet_prefix_len,
                                    double tau = kDefaultTau, const AlphaSweep& sweep = {});

DiscrepancyChoice discrepancy_alpha(const Eigen::VectorXd& y_noisy,
                                    std::shared_ptr<const ForwardOperator> forward,
                                    std::shared_ptr<const PenaltyMatrix> penalty,
                                    int quiet_prefix_len, double tau = kDefaultTau,
                                    const AlphaSweep& sweep = {});

/// C delta^{2(a + p) / (a + q)}.
double apriori_alpha(double delta, double a, double p, double q, double c = 1.0);

struct SlopePrediction {
  double slope = 0.0;
  double q_effective = 0.0;
  std::optional<double> p_star;  ///< (q - a) / 2; empty for unlimited smoothness
  bool saturated = false;
};

/**
 * Rate exponent of Tikhonov regularization in the scale of order p for a
 * truth of smoothness q: q'/(q' + a) with q' = min(q, 2p + a). An empty q
 * means unlimited smoothness, giving (2p + a) / (2p + 2a).
 */
SlopePrediction theoretical_slope(double a, double p, std::optional<double> q);

struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares of log(error) on log(delta).
LogLogFit fit_loglog_slope(std::span<const double> deltas, std::span<const double> errors);

/// Benchmark truths. Gaussians are scaled to unit L2 norm on the real line.
struct TestFunction {
  enum class Kind { CenteredGaussian, OffCenterGaussian, Custom };

  Kind kind = Kind::CenteredGaussian;
  double center = 0.5;
  double sigma = 0.05;
  std::function<double(double)> custom;
  std::string name = "centered-gaussian";

  static TestFunction centered_gaussian(double center = 0.5, double sigma = 0.05);
  static TestFunction off_center_gaussian(double center = 0.2, double sigma = 0.05);
  static TestFunction from_function(std::string name, std::function<double(double)> f);

  double operator()(double t) const;
};

enum class AlphaRule { Fixed, Oracle, Discrepancy, Apriori };

const char* to_string(AlphaRule rule);
AlphaRule alpha_rule_from_string(const std::string& name);

struct RatePlan {
  double a = 1.0;
  int r = 1;
  double p = 1.0;
  std::optional<double> q;  ///< empty: numerically compact support
  TestFunction test_function;
  std::vector<double> deltas;
  int replicates = 5;
  AlphaRule alpha_rule = AlphaRule::Oracle;
  int n = 100;
  std::uint64_t seed = 0;
  SolverId solver = SolverId::Direct;
  Kernel kernel = Kernel::constant();
  AlphaSweep sweep;
  double fixed_alpha = 1e-6;
  double apriori_c = 1.0;
  double tau = kDefaultTau;
  int quiet_prefix_len = 0;  ///< 0: n / 10
  int threads = 0;           ///< 0: ABELSCALE_THREADS or hardware concurrency

  void validate() const;
};

/// 8 log-spaced levels in [0.005, 0.1].
std::vector<double> default_deltas();

struct RatePoint {
  double delta = 0.0;
  double mean_error = 0.0;
  double std_error = 0.0;  ///< sample standard deviation over replicates
  double mean_alpha = 0.0; ///< geometric mean of the chosen alphas
};

struct RateStudyResult {
  std::vector<RatePoint> points;
  LogLogFit fit;
  SlopePrediction theory;
  std::vector<std::vector<double>> alpha_trace;  ///< [delta index][replicate]
  std::vector<std::vector<double>> error_trace;
  std::vector<std::string> warnings;
  bool complete = true;

  double fitted_slope() const { return fit.slope; }
  double theoretical_slope() const { return theory.slope; }
};

/// Thrown when a cell fails; carries the cells that finished.
class RateStudyAborted : public NumericalError {
 public:
  RateStudyAborted(const std::string& what, RateStudyResult partial)
      : NumericalError(what), partial_(std::move(partial)) {}
  const RateStudyResult& partial() const { return partial_; }

 private:
  RateStudyResult partial_;
};

/**
 * For every delta and replicate: y = T x_true plus noise, alpha by the plan's
 * rule, reconstruct, record the weighted error. Cells run in parallel; the
 * result depends only on the plan.
 */
RateStudyResult rate_study(const RatePlan& plan);

/// Worker count: `requested` if positive, else ABELSCALE_THREADS, else hardware concurrency.
int resolve_thread_count(int requested);

}  // namespace abelscale
