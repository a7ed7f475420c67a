#include "abelscale/diagnostics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>

#include "abelscale/error.hpp"
#include "abelscale/tuning.hpp"

namespace abelscale {

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Yes: return "yes";
    case Verdict::No: return "no";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "unknown";
}

namespace {

constexpr int kBand = 2;
constexpr int kQuadraturePoints = 32;  // per half of the inner integral
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Fornberg's recursion: weights of the m-th derivative at z from nodes x.
std::vector<double> fornberg(double z, const std::vector<double>& x, int m) {
  const int np = static_cast<int>(x.size());
  std::vector<std::vector<double>> c(np, std::vector<double>(m + 1, 0.0));
  double c1 = 1.0, c4 = x[0] - z;
  c[0][0] = 1.0;
  for (int i = 1; i < np; ++i) {
    const int mn = std::min(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[i] - z;
    for (int j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(np);
  for (int i = 0; i < np; ++i) w[i] = c[i][m];
  return w;
}

class ResidualEvaluator {
 public:
  ResidualEvaluator(const Kernel& kernel, double a, double fd_step)
      : kernel_(kernel), a_(a), fd_step_(fd_step) {
    const double nearest = std::round(a);
    integer_ = std::abs(a - nearest) < 1e-12;
    r_ = integer_ ? static_cast<int>(nearest) : static_cast<int>(std::ceil(a));
    eps_ = a - r_ + 1.0;
    for (int j = 1; j <= r_; ++j)
      if (!kernel.has_s_derivative(j)) fd_orders_.push_back(j);
  }

  int r() const { return r_; }
  const std::vector<int>& fd_orders() const { return fd_orders_; }

  double h(double t, double s) const {
    const double ktt = kernel_(t, t);
    if (integer_) {
      const double sign = r_ % 2 == 0 ? 1.0 : -1.0;
      return sign / std::tgamma(a_) * dg(t, s) / ktt;
    }
    const double sign = r_ % 2 == 0 ? 1.0 : -1.0;
    const double c = sign / std::tgamma(r_) * std::sin(std::numbers::pi * eps_) / std::numbers::pi;
    return c * inner_integral(t, s) / ktt;
  }

 private:
  // m-th s-derivative of k(t, .) at s.
  double dk(int m, double t, double s) const {
    if (kernel_.has_s_derivative(m)) return kernel_.s_derivative(m, t, s);
    const int np = m + 2;
    double step = std::min(fd_step_, t / (np - 1));
    std::vector<double> nodes(np);
    double first = s - 0.5 * (np - 1) * step;
    first = std::clamp(first, 0.0, t - (np - 1) * step);
    for (int i = 0; i < np; ++i) nodes[i] = first + i * step;
    const std::vector<double> w = fornberg(s, nodes, m);
    double sum = 0.0;
    for (int i = 0; i < np; ++i) sum += w[i] * kernel_(t, nodes[i]);
    return sum;
  }

  // r-th s-derivative of g(t, s) = (k(t,t) - k(t,s)) (t - s)^(a-1), by Leibniz.
  double dg(double t, double s) const {
    const double d = t - s;
    double sum = 0.0;
    double binom = 1.0;
    for (int j = 0; j <= r_; ++j) {
      const double u = j == 0 ? kernel_(t, t) - kernel_(t, s) : -dk(j, t, s);
      const int i = r_ - j;
      double fall = 1.0;
      for (int l = 1; l <= i; ++l) fall *= (a_ - l);
      const double v = (i % 2 == 0 ? 1.0 : -1.0) * fall * std::pow(d, a_ - 1.0 - i);
      sum += binom * u * v;
      binom = binom * (r_ - j) / (j + 1);
    }
    return sum;
  }

  // int_s^t (tau - s)^(-eps) dg(t, tau) dtau, split at the midpoint; each half is
  // mapped to a variable in which the end-point singularity disappears.
  double inner_integral(double t, double s) const {
    const double mid = 0.5 * (s + t);
    const double lower_len = std::pow(mid - s, 1.0 - eps_);
    const double upper_len = std::pow(t - mid, eps_);
    double lower = 0.0, upper = 0.0;
    for (int k = 0; k < kQuadraturePoints; ++k) {
      const double x = (k + 0.5) / kQuadraturePoints;
      const double u = x * lower_len;
      lower += dg(t, s + std::pow(u, 1.0 / (1.0 - eps_)));
      const double w = x * upper_len;
      const double tau = t - std::pow(w, 1.0 / eps_);
      upper += std::pow(w, 1.0 / eps_ - 1.0) * std::pow(tau - s, -eps_) * dg(t, tau);
    }
    lower *= lower_len / kQuadraturePoints / (1.0 - eps_);
    upper *= upper_len / kQuadraturePoints / eps_;
    return lower + upper;
  }

  const Kernel& kernel_;
  double a_;
  double fd_step_;
  bool integer_ = true;
  int r_ = 1;
  double eps_ = 1.0;
  std::vector<int> fd_orders_;
};

struct Estimate {
  double norm = 0.0;
  double band = 0.0;
};

Estimate hs_estimate(const ResidualKernelSamples& s) {
  const Eigen::MatrixXd& h = s.h;
  const int n = s.fine_n;
  const double dt = 1.0 / n;
  Estimate out;
  double sum = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 1; j + s.band <= i; ++j) sum += h(i, j) * h(i, j);
  out.norm = std::sqrt(sum) * dt;
  // Excluded cells: the diagonal band (one value per offset below `band`),
  // the column s = 0 and the strip between the last node and t = 1,
  // each filled with the nearest resolved value.
  double band = 0.0;
  for (int i = s.band + 1; i < n; ++i) {
    const double diag = h(i, i - s.band);
    band += s.band * diag * diag + h(i, 1) * h(i, 1);
  }
  for (int j = 1; j + s.band <= n - 1; ++j) band += h(n - 1, j) * h(n - 1, j);
  out.band = std::sqrt(band) * dt;
  if (!std::isfinite(sum)) out.norm = std::numeric_limits<double>::infinity();
  if (!std::isfinite(band)) out.band = std::numeric_limits<double>::infinity();
  return out;
}

double rms(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return v.empty() ? 0.0 : std::sqrt(s / v.size());
}

// Exponent beta in |h| ~ dist^(-beta), from magnitudes at two distances.
std::optional<double> growth(double near, double far, double near_dist, double far_dist) {
  if (!(near > 1e-300) || !(far > 1e-300) || !std::isfinite(near) || !std::isfinite(far))
    return std::nullopt;
  return std::log(near / far) / std::log(far_dist / near_dist);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

}  // namespace

ResidualKernelSamples residual_kernel(const Kernel& kernel, double a, const Grid& fine_grid) {
  if (!(a > 0.0) || !std::isfinite(a)) throw ValidationError("Abel order must be positive");
  const int n = fine_grid.size();
  if (n < 16) throw ValidationError("diagnostics need a fine grid of at least 16 nodes");
  const double dt = fine_grid.spacing();
  const ResidualEvaluator eval(kernel, a, std::min(dt, 1e-3));

  ResidualKernelSamples out;
  out.a = a;
  out.fine_n = n;
  out.band = kBand;
  out.h = Eigen::MatrixXd::Constant(n, n, kNaN);
  if (!eval.fd_orders().empty()) {
    out.finite_difference_derivatives = true;
    std::string orders;
    for (int m : eval.fd_orders()) orders += (orders.empty() ? "" : ", ") + std::to_string(m);
    out.notes.push_back("s-derivatives of order " + orders +
                        " taken by second-order finite differences; expect reduced accuracy");
  }

  std::atomic<int> next{kBand + 1};
  std::atomic<bool> failed{false};
  std::string failure;
  auto worker = [&] {
    for (int i = next++; i < n && !failed; i = next++) {
      try {
        for (int j = 1; j + kBand <= i; ++j) out.h(i, j) = eval.h(fine_grid.node(i), fine_grid.node(j));
      } catch (const std::exception& e) {
        if (!failed.exchange(true)) failure = e.what();
      }
    }
  };
  const int threads = resolve_thread_count(0);
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failed) throw NumericalError("residual kernel evaluation failed: " + failure);
  return out;
}

ResidualKernelReport hs_condition_check(const Kernel& kernel, double a, const Grid& fine_grid) {
  ResidualKernelReport rep;
  rep.a = a;
  rep.fine_n = fine_grid.size();
  rep.samples = residual_kernel(kernel, a, fine_grid);
  rep.notes = rep.samples.notes;
  const Estimate fine = hs_estimate(rep.samples);
  rep.hs_norm_estimate = fine.norm;
  rep.band_bound = fine.band;

  const Eigen::MatrixXd& h = rep.samples.h;
  const int n = rep.fine_n;
  bool finite = true;
  for (int i = 0; i < n && finite; ++i)
    for (int j = 1; j + kBand <= i; ++j)
      if (!std::isfinite(h(i, j))) {
        rep.flags.push_back("non-finite h at (t, s) = (" + fmt(fine_grid.node(i)) + ", " +
                            fmt(fine_grid.node(j)) + ")");
        finite = false;
        break;
      }

  if (finite) {
    // Towards the diagonal: offsets 2 and 16 cells over the rows resolving both.
    const int d1 = kBand, d2 = 8 * kBand;
    std::vector<double> near, far;
    for (int i = d2 + 1; i < n; ++i) {
      near.push_back(h(i, i - d1));
      far.push_back(h(i, i - d2));
    }
    if (auto beta = growth(rms(near), rms(far), d1, d2); beta && *beta >= 0.45)
      rep.flags.push_back("|h| grows like (t - s)^-" + fmt(*beta) + " towards the diagonal");

    // Towards the origin along s = t / 2.
    const int i1 = 16, i2 = std::min(128, n - 1);
    const auto b0 = growth(std::abs(h(i1, i1 / 2)), std::abs(h(i2, i2 / 2)), i1, i2);
    if (b0 && *b0 >= 0.9)
      rep.flags.push_back("|h| grows like rho^-" + fmt(*b0) + " towards the origin");

    // Towards s = 0 at fixed t.
    const int j1 = 1, j2 = 8;
    std::vector<double> edge, inner;
    for (int i = j2 + kBand; i < n; ++i) {
      edge.push_back(h(i, j1));
      inner.push_back(h(i, j2));
    }
    if (auto b1 = growth(rms(edge), rms(inner), j1, j2); b1 && *b1 >= 0.45)
      rep.flags.push_back("|h| grows like s^-" + fmt(*b1) + " towards s = 0");
  } else {
    rep.hs_norm_estimate = std::numeric_limits<double>::infinity();
  }

  const int coarse_n = n / 2;
  if (coarse_n >= 16) {
    const ResidualKernelSamples coarse = residual_kernel(kernel, a, Grid(coarse_n, coarse_n));
    rep.coarse_estimate = hs_estimate(coarse).norm;
    const double scale = std::max(rep.hs_norm_estimate, rep.coarse_estimate);
    rep.refinement_stable = scale < 1e-14 ||
                            std::abs(rep.hs_norm_estimate - rep.coarse_estimate) <= 0.1 * scale;
    if (!rep.refinement_stable)
      rep.notes.push_back("estimate changes from " + fmt(rep.coarse_estimate) + " to " +
                          fmt(rep.hs_norm_estimate) + " under refinement");
  } else {
    rep.refinement_stable = false;
    rep.notes.push_back("grid too coarse for a refinement check");
  }

  if (!(rep.hs_norm_estimate < 1.0)) {
    rep.condition_met = Verdict::No;
  } else if (rep.flags.empty() && rep.refinement_stable && rep.hs_norm_estimate + rep.band_bound < 1.0) {
    rep.condition_met = Verdict::Yes;
  } else {
    rep.condition_met = Verdict::Inconclusive;
  }
  return rep;
}

}  // namespace abelscale
