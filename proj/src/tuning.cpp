#include "abelscale/tuning.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <thread>

namespace abelscale {

Eigen::VectorXd add_noise(const Eigen::VectorXd& y, const NoiseModel& model) {
  if (!(model.delta >= 0.0) || !std::isfinite(model.delta))
    throw ValidationError("noise level must be finite and non-negative");
  if (model.delta == 0.0) return y;
  std::mt19937_64 gen(model.seed);
  std::normal_distribution<double> normal(0.0, model.delta);
  Eigen::VectorXd out = y;
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += normal(gen);
  return out;
}

void AlphaSweep::validate() const {
  if (!(alpha_min > 0.0) || !(alpha_max > alpha_min) || !std::isfinite(alpha_max))
    throw ValidationError("alpha sweep needs 0 < alpha_min < alpha_max");
  if (!(step_factor > 1.0) || !std::isfinite(step_factor))
    throw ValidationError("alpha sweep step factor must exceed 1");
  if (patience < 1) throw ValidationError("alpha sweep patience must be at least 1");
}

std::vector<double> AlphaSweep::values() const {
  validate();
  std::vector<double> out;
  const double log_step = std::log(step_factor);
  const double span = std::log(alpha_max / alpha_min);
  const int steps = static_cast<int>(std::floor(span / log_step * (1.0 + 1e-12)));
  for (int k = 0; k <= steps; ++k) out.push_back(alpha_min * std::exp(k * log_step));
  return out;
}

namespace {

Reconstruction solve_for(const NormalEquations& system, double alpha) {
  if (system.forward().grid().size() <= kDirectSolverMaxNodes) return system.solve_direct(alpha);
  return system.solve_cg(alpha, 1e-10, 10000);
}

}  // namespace

OracleChoice oracle_alpha(const NormalEquations& system, const Eigen::VectorXd& x_true,
                          const AlphaSweep& sweep) {
  const Grid& grid = system.forward().grid();
  if (x_true.size() != grid.size()) throw ValidationError("true solution does not match the grid");
  OracleChoice out;
  out.error = std::numeric_limits<double>::infinity();
  int rising = 0;
  double previous = std::numeric_limits<double>::infinity();
  for (double alpha : sweep.values()) {
    Reconstruction rec = solve_for(system, alpha);
    const double err = weighted_norm(rec.x - x_true, grid);
    out.alphas.push_back(alpha);
    out.errors.push_back(err);
    if (err < out.error) {
      out.error = err;
      out.alpha = alpha;
      out.reconstruction = std::move(rec);
    }
    rising = err > previous ? rising + 1 : 0;
    previous = err;
    if (rising >= sweep.patience) break;
  }
  return out;
}

OracleChoice oracle_alpha(const Eigen::VectorXd& x_true, const Eigen::VectorXd& y_noisy,
                          std::shared_ptr<const ForwardOperator> forward,
                          std::shared_ptr<const PenaltyMatrix> penalty, const AlphaSweep& sweep) {
  return oracle_alpha(NormalEquations(std::move(forward), std::move(penalty), y_noisy), x_true, sweep);
}

double estimate_noise_level(const Eigen::VectorXd& y, int prefix_len) {
  if (prefix_len < 2 || prefix_len > y.size())
    throw ValidationError("quiet prefix of " + std::to_string(prefix_len) +
                          " samples is outside the data range");
  const Eigen::VectorXd head = y.head(prefix_len);
  const double mean = head.mean();
  return std::sqrt((head.array() - mean).square().sum() / (prefix_len - 1));
}

DiscrepancyChoice discrepancy_alpha(const NormalEquations& system, int quiet_prefix_len, double tau,
                                    const AlphaSweep& sweep) {
  if (quiet_prefix_len < 10) throw ValidationError("quiet prefix needs at least 10 samples");
  if (!(tau >= 1.0)) throw ValidationError("discrepancy factor tau must be at least 1");
  const Grid& grid = system.forward().grid();
  DiscrepancyChoice out;
  out.delta_hat = estimate_noise_level(system.data(), quiet_prefix_len);
  out.delta_hat_norm = out.delta_hat * std::sqrt(grid.size() * grid.spacing());
  out.target = tau * out.delta_hat_norm;
  const std::vector<double> alphas = sweep.values();

  if (out.target == 0.0) {
    out.alpha = alphas.front();
    out.reconstruction = solve_for(system, out.alpha);
    out.alphas = {out.alpha};
    out.residuals = {out.reconstruction.residual_norm};
    out.satisfied = out.reconstruction.residual_norm == 0.0;
    if (!out.satisfied)
      out.reconstruction.warnings.push_back("estimated noise level is zero; using the smallest alpha");
    return out;
  }

  int best = -1;
  int closest = 0;
  int above = 0;
  std::vector<Reconstruction> recs;
  for (double alpha : alphas) {
    recs.push_back(solve_for(system, alpha));
    const double res = recs.back().residual_norm;
    const int k = static_cast<int>(out.alphas.size());
    out.alphas.push_back(alpha);
    out.residuals.push_back(res);
    if (std::abs(res - out.target) < std::abs(out.residuals[closest] - out.target)) closest = k;
    if (res <= out.target) {
      best = k;
      above = 0;
    } else if (best >= 0 && ++above >= sweep.patience) {
      break;
    }
  }
  if (best >= 0) {
    out.alpha = out.alphas[best];
    out.reconstruction = std::move(recs[best]);
  } else {
    out.satisfied = false;
    out.alpha = out.alphas[closest];
    out.reconstruction = std::move(recs[closest]);
    out.reconstruction.warnings.push_back(
        "no alpha met the discrepancy target; using the residual closest to it");
  }
  return out;
}

DiscrepancyChoice discrepancy_alpha(const Eigen::VectorXd& y_noisy,
                                    std::shared_ptr<const ForwardOperator> forward,
                                    std::shared_ptr<const PenaltyMatrix> penalty,
                                    int quiet_prefix_len, double tau, const AlphaSweep& sweep) {
  return discrepancy_alpha(NormalEquations(std::move(forward), std::move(penalty), y_noisy),
                           quiet_prefix_len, tau, sweep);
}

double apriori_alpha(double delta, double a, double p, double q, double c) {
  if (!(delta > 0.0)) throw ValidationError("noise level must be positive");
  if (!(a > 0.0)) throw ValidationError("Abel order must be positive");
  if (!(q > 0.0)) throw ValidationError("smoothness q must be positive");
  if (!(p >= 0.0)) throw ValidationError("penalty order must be non-negative");
  if (!(c > 0.0)) throw ValidationError("a-priori constant must be positive");
  return c * std::pow(delta, 2.0 * (a + p) / (a + q));
}

SlopePrediction theoretical_slope(double a, double p, std::optional<double> q) {
  if (!(a > 0.0)) throw ValidationError("Abel order must be positive");
  if (!(p >= 0.0)) throw ValidationError("penalty order must be non-negative");
  SlopePrediction out;
  const double qualification = 2.0 * p + a;
  if (q) {
    if (!(*q > 0.0)) throw ValidationError("smoothness q must be positive");
    out.q_effective = std::min(*q, qualification);
    out.p_star = (*q - a) / 2.0;
    out.saturated = p >= *out.p_star;
  } else {
    out.q_effective = qualification;
  }
  out.slope = out.q_effective / (out.q_effective + a);
  return out;
}

LogLogFit fit_loglog_slope(std::span<const double> deltas, std::span<const double> errors) {
  if (deltas.size() != errors.size()) throw ValidationError("fit needs as many errors as noise levels");
  if (deltas.size() < 4) throw ValidationError("fit needs at least 4 points");
  const std::size_t m = deltas.size();
  std::vector<double> x(m), y(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (!(deltas[i] > 0.0) || !(errors[i] > 0.0) || !std::isfinite(deltas[i]) || !std::isfinite(errors[i]))
      throw ValidationError("fit needs positive finite values");
    x[i] = std::log(deltas[i]);
    y[i] = std::log(errors[i]);
  }
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / m;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw ValidationError("fit needs at least two distinct noise levels");
  LogLogFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double e = y[i] - fit.intercept - fit.slope * x[i];
    ssr += e * e;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
  return fit;
}

TestFunction TestFunction::centered_gaussian(double center, double sigma) {
  TestFunction f;
  f.kind = Kind::CenteredGaussian;
  f.center = center;
  f.sigma = sigma;
  f.name = "centered-gaussian";
  return f;
}

TestFunction TestFunction::off_center_gaussian(double center, double sigma) {
  TestFunction f = centered_gaussian(center, sigma);
  f.kind = Kind::OffCenterGaussian;
  f.name = "off-center-gaussian";
  return f;
}

TestFunction TestFunction::from_function(std::string name, std::function<double(double)> fn) {
  TestFunction f;
  f.kind = Kind::Custom;
  f.custom = std::move(fn);
  f.name = std::move(name);
  return f;
}

double TestFunction::operator()(double t) const {
  if (kind == Kind::Custom) return custom(t);
  const double amplitude = 1.0 / std::sqrt(sigma * std::sqrt(std::numbers::pi));
  const double z = (t - center) / sigma;
  return amplitude * std::exp(-0.5 * z * z);
}

const char* to_string(AlphaRule rule) {
  switch (rule) {
    case AlphaRule::Fixed: return "fixed";
    case AlphaRule::Oracle: return "oracle";
    case AlphaRule::Discrepancy: return "discrepancy";
    case AlphaRule::Apriori: return "apriori";
  }
  return "unknown";
}

AlphaRule alpha_rule_from_string(const std::string& name) {
  if (name == "fixed") return AlphaRule::Fixed;
  if (name == "oracle") return AlphaRule::Oracle;
  if (name == "discrepancy") return AlphaRule::Discrepancy;
  if (name == "apriori") return AlphaRule::Apriori;
  throw ValidationError("unknown alpha rule '" + name + "'");
}

void RatePlan::validate() const {
  if (!(a > 0.0)) throw ValidationError("Abel order must be positive");
  if (r < 1) throw ValidationError("scale index r must be at least 1");
  if (!(p >= 0.0)) throw ValidationError("penalty order must be non-negative");
  if (q && !(*q > 0.0)) throw ValidationError("smoothness q must be positive");
  if (deltas.size() < 4) throw ValidationError("rate study needs at least 4 noise levels");
  for (double d : deltas)
    if (!(d > 0.0) || !std::isfinite(d)) throw ValidationError("noise levels must be positive");
  const auto [lo, hi] = std::minmax_element(deltas.begin(), deltas.end());
  if (*hi < 10.0 * *lo) throw ValidationError("noise levels must span at least one decade");
  if (replicates < 1) throw ValidationError("rate study needs at least one replicate");
  if (n < 2 * r + 2) throw ValidationError("grid too small for the scale index");
  if (test_function.kind == TestFunction::Kind::Custom && !test_function.custom)
    throw ValidationError("custom test function has no evaluator");
  if (test_function.kind != TestFunction::Kind::Custom && !(test_function.sigma > 0.0))
    throw ValidationError("Gaussian width must be positive");
  if (alpha_rule == AlphaRule::Fixed && !(fixed_alpha > 0.0))
    throw ValidationError("fixed alpha must be positive");
  sweep.validate();
}

std::vector<double> default_deltas() {
  std::vector<double> d(8);
  for (int k = 0; k < 8; ++k) d[k] = 0.005 * std::pow(20.0, k / 7.0);
  return d;
}

int resolve_thread_count(int requested) {
  int count = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("ABELSCALE_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && cap > 0) {
      count = requested > 0 ? std::min<int>(count, static_cast<int>(cap)) : static_cast<int>(cap);
    }
  }
  return std::max(count, 1);
}

namespace {

std::uint64_t cell_seed(std::uint64_t seed, std::size_t delta_index, int replicate) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(delta_index), static_cast<std::uint32_t>(replicate)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

struct Cell {
  bool done = false;
  double alpha = 0.0;
  double error = 0.0;
  std::vector<std::string> warnings;
};

}  // namespace

RateStudyResult rate_study(const RatePlan& plan) {
  plan.validate();
  const Grid grid(plan.n, std::max(plan.n, kDefaultMaxNodes));
  auto forward = std::make_shared<const ForwardOperator>(build_abel_matrix(plan.a, grid, plan.kernel));
  auto penalty = std::make_shared<const PenaltyMatrix>(build_penalty(plan.r, plan.p, grid));
  const Eigen::VectorXd x_true = grid.sample([&](double t) { return plan.test_function(t); });
  const Eigen::VectorXd y = apply_forward(*forward, x_true);
  const int prefix = plan.quiet_prefix_len > 0 ? plan.quiet_prefix_len : plan.n / 10;

  std::vector<double> deltas = plan.deltas;
  std::sort(deltas.begin(), deltas.end());
  const std::size_t cells = deltas.size() * static_cast<std::size_t>(plan.replicates);
  std::vector<Cell> results(cells);

  auto run_cell = [&](std::size_t c) {
    const std::size_t d = c / plan.replicates;
    const int rep = static_cast<int>(c % plan.replicates);
    const double delta = deltas[d];
    const Eigen::VectorXd data = add_noise(y, {delta, cell_seed(plan.seed, d, rep)});
    const NormalEquations system(forward, penalty, data);
    Cell& cell = results[c];
    Reconstruction rec;
    switch (plan.alpha_rule) {
      case AlphaRule::Oracle: {
        OracleChoice choice = oracle_alpha(system, x_true, plan.sweep);
        cell.alpha = choice.alpha;
        rec = std::move(choice.reconstruction);
        break;
      }
      case AlphaRule::Discrepancy: {
        DiscrepancyChoice choice = discrepancy_alpha(system, prefix, plan.tau, plan.sweep);
        cell.alpha = choice.alpha;
        rec = std::move(choice.reconstruction);
        break;
      }
      case AlphaRule::Fixed:
      case AlphaRule::Apriori: {
        cell.alpha = plan.alpha_rule == AlphaRule::Fixed
                         ? plan.fixed_alpha
                         : apriori_alpha(delta, plan.a, plan.p,
                                         plan.q.value_or(2.0 * plan.p + plan.a), plan.apriori_c);
        rec = plan.solver == SolverId::Cg ? system.solve_cg(cell.alpha, 1e-10, 10000)
                                          : system.solve_direct(cell.alpha);
        break;
      }
    }
    cell.error = weighted_norm(rec.x - x_true, grid);
    cell.warnings = std::move(rec.warnings);
    cell.done = true;
  };

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  std::string first_error;
  auto worker = [&] {
    for (std::size_t c = next++; c < cells && !failed; c = next++) {
      try {
        run_cell(c);
      } catch (const std::exception& e) {
        std::lock_guard lock(error_mutex);
        if (!failed.exchange(true)) first_error = e.what();
      }
    }
  };
  const int threads = std::min<int>(resolve_thread_count(plan.threads), static_cast<int>(cells));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  RateStudyResult out;
  out.theory = theoretical_slope(plan.a, plan.p, plan.q);
  std::size_t ridged = 0;
  for (std::size_t d = 0; d < deltas.size(); ++d) {
    std::vector<double> alphas, errors;
    bool complete = true;
    for (int rep = 0; rep < plan.replicates; ++rep) {
      const Cell& cell = results[d * plan.replicates + rep];
      if (!cell.done) {
        complete = false;
        continue;
      }
      alphas.push_back(cell.alpha);
      errors.push_back(cell.error);
      ridged += cell.warnings.empty() ? 0 : 1;
    }
    out.alpha_trace.push_back(alphas);
    out.error_trace.push_back(errors);
    if (!complete || errors.empty()) {
      out.complete = false;
      continue;
    }
    RatePoint pt;
    pt.delta = deltas[d];
    const double m = static_cast<double>(errors.size());
    pt.mean_error = std::accumulate(errors.begin(), errors.end(), 0.0) / m;
    double var = 0.0, log_alpha = 0.0;
    for (std::size_t k = 0; k < errors.size(); ++k) {
      var += (errors[k] - pt.mean_error) * (errors[k] - pt.mean_error);
      log_alpha += std::log(alphas[k]);
    }
    pt.std_error = errors.size() > 1 ? std::sqrt(var / (m - 1.0)) : 0.0;
    pt.mean_alpha = std::exp(log_alpha / m);
    out.points.push_back(pt);
  }
  if (ridged > 0)
    out.warnings.push_back(std::to_string(ridged) + " solves reported warnings (ridge or CG stagnation)");

  if (out.points.size() >= 4) {
    std::vector<double> ds, es;
    for (const RatePoint& pt : out.points) {
      ds.push_back(pt.delta);
      es.push_back(pt.mean_error);
    }
    out.fit = fit_loglog_slope(ds, es);
    if (out.fit.slope > 1.05)
      out.warnings.push_back("fitted slope " + std::to_string(out.fit.slope) +
                             " exceeds 1.05; Tikhonov regularization cannot beat O(delta)");
  }
  if (failed) throw RateStudyAborted("rate study aborted: " + first_error, std::move(out));
  return out;
}

}  // namespace abelscale
