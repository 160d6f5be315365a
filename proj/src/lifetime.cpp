#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "qdtb/error.hpp"
#include "qdtb/fitting.hpp"
#include "qdtb/linalg.hpp"
#include "qdtb/optimize.hpp"

namespace qdtb {
namespace {

constexpr double kMinCounts = 1e4;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// CDF of t0 + Exp(tau) + N(0, sigma^2).
double exgauss_cdf(double t, double tau, double t0, double sigma) {
  const double x = t - t0;
  if (sigma <= 0.0) return x <= 0.0 ? 0.0 : -std::expm1(-x / tau);
  const double tail = -x / tau + sigma * sigma / (2.0 * tau * tau);
  const double g = normal_cdf(x / sigma - sigma / tau);
  const double second = g > 0.0 ? std::exp(tail + std::log(g)) : 0.0;
  return normal_cdf(x / sigma) - second;
}

}  // namespace

LifetimeFit fit_lifetime(const CoincidenceHistogram& hist, double jitter_sigma_ps) {
  if (!(jitter_sigma_ps >= 0.0)) throw std::invalid_argument("fit_lifetime: jitter sigma must be non-negative");
  const auto counts = hist.counts();
  const std::size_t nb = hist.size();
  double total = 0.0, weighted = 0.0;
  std::size_t peak = 0;
  for (std::size_t i = 0; i < nb; ++i) {
    total += static_cast<double>(counts[i]);
    weighted += static_cast<double>(counts[i]) * hist.bin_center(i);
    if (counts[i] > counts[peak]) peak = i;
  }
  if (!(total > 0.0)) throw DataError("fit_lifetime: empty histogram");
  LifetimeFit out;
  out.sufficient_counts = total >= kMinCounts;

  const double sigma = jitter_sigma_ps;
  const double lo = hist.origin(), hi = hist.range_end();
  auto nll = [&](std::span<const double> p) {
    const double tau = p[0], t0 = p[1];
    if (!(tau > 0.0)) return std::numeric_limits<double>::infinity();
    const double f_lo = exgauss_cdf(lo, tau, t0, sigma);
    const double norm = exgauss_cdf(hi, tau, t0, sigma) - f_lo;
    if (!(norm > 0.0)) return std::numeric_limits<double>::infinity();
    double s = 0.0;
    double prev = f_lo;
    for (std::size_t i = 0; i < nb; ++i) {
      const double next = exgauss_cdf(hist.bin_left(i + 1), tau, t0, sigma);
      if (counts[i] > 0) s -= static_cast<double>(counts[i]) * std::log(std::max((next - prev) / norm, 1e-300));
      prev = next;
    }
    return s;
  };

  const double t0_init = sigma > 0.0 ? hist.bin_center(peak) - sigma : hist.bin_left(peak);
  const double tau_init = std::max(weighted / total - t0_init, 2.0 * hist.bin_width());
  const double step[2] = {0.1 * tau_init, std::max(sigma, hist.bin_width())};
  NelderMeadOptions nm;
  nm.f_tolerance = 1e-13;
  nm.x_tolerance = 1e-9;
  const auto best = minimize_nelder_mead(nll, {tau_init, t0_init}, step, nm);
  out.converged = best.converged;
  out.tau.value = best.x[0];
  out.t0.value = best.x[1];
  const auto hess = numeric_hessian(nll, best.x, 1e-4);
  if (const auto cov = invert(hess)) {
    out.tau.sigma = std::sqrt(std::max(0.0, (*cov)(0, 0)));
    out.t0.sigma = std::sqrt(std::max(0.0, (*cov)(1, 1)));
  } else {
    out.converged = false;
  }

  // Tail cross-check, Poisson weights taken from the current model.
  const double start = hist.bin_center(peak) + 2.355 * sigma;
  std::vector<std::size_t> bins;
  for (std::size_t i = 0; i < nb; ++i)
    if (hist.bin_center(i) >= start) bins.push_back(i);
  if (bins.size() >= 3) {
    std::vector<double> p = {std::max(1.0, static_cast<double>(counts[bins.front()])), out.tau.value};
    std::vector<double> weight(bins.size(), 1.0);
    LeastSquaresResult fit;
    for (int pass = 0; pass < 4; ++pass) {
      for (std::size_t j = 0; j < bins.size(); ++j) {
        const double m = pass == 0 ? static_cast<double>(counts[bins[j]])
                                   : p[0] * std::exp(-(hist.bin_center(bins[j]) - start) / p[1]);
        weight[j] = 1.0 / std::sqrt(std::max(m, 1.0));
      }
      auto residuals = [&](std::span<const double> q, std::span<double> r) {
        for (std::size_t j = 0; j < bins.size(); ++j) {
          const double m = q[0] * std::exp(-(hist.bin_center(bins[j]) - start) / q[1]);
          r[j] = (static_cast<double>(counts[bins[j]]) - m) * weight[j];
        }
      };
      fit = levenberg_marquardt(residuals, bins.size(), p);
      p = fit.params;
    }
    out.tail_tau = {p[1], std::sqrt(std::max(0.0, fit.covariance(1, 1)))};
    out.consistent = std::abs(out.tail_tau.value - out.tau.value) <= 2.0 * out.tail_tau.sigma;
  }
  return out;
}

Estimate fit_lifetime_samples(std::span<const double> delays_ps) {
  if (delays_ps.empty()) throw DataError("fit_lifetime_samples: no delays");
  double sum = 0.0;
  for (double d : delays_ps) sum += d;
  const double mean = sum / static_cast<double>(delays_ps.size());
  return {mean, mean / std::sqrt(static_cast<double>(delays_ps.size()))};
}

}  // namespace qdtb
