#include "qdtb/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace qdtb {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double step_for(double x, double rel) { return rel * std::max(1.0, std::abs(x)); }

}  // namespace

MinimizeResult minimize_bfgs(const ValueAndGradient& fg, std::vector<double> x0, const BfgsOptions& options) {
  const std::size_t n = x0.size();
  MinimizeResult res;
  res.x = std::move(x0);
  std::vector<double> g(n), g_new(n), x_new(n), dir(n), s(n), y(n);
  double f = fg(res.x, g);
  if (!std::isfinite(f)) throw std::invalid_argument("minimize_bfgs: objective not finite at the start point");
  RealMatrix h = RealMatrix::identity(n);  // inverse Hessian approximation
  bool scaled = false;

  for (int it = 0; it < options.max_iterations; ++it) {
    res.iterations = it + 1;
    double gnorm = std::sqrt(dot(g, g));
    if (gnorm <= options.g_tolerance * (1.0 + std::abs(f))) {
      res.converged = true;
      break;
    }
    for (std::size_t i = 0; i < n; ++i) {
      dir[i] = 0.0;
      for (std::size_t j = 0; j < n; ++j) dir[i] -= h(i, j) * g[j];
    }
    double slope = dot(dir, g);
    if (slope >= 0.0) {  // lost descent; restart from steepest descent
      h = RealMatrix::identity(n);
      for (std::size_t i = 0; i < n; ++i) dir[i] = -g[i];
      slope = -gnorm * gnorm;
    }
    double alpha = 1.0;
    double f_new = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = res.x[i] + alpha * dir[i];
      f_new = fg(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // No representable descent left along this direction.
      res.converged = gnorm <= 1e-6 * (1.0 + std::abs(f));
      break;
    }
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = x_new[i] - res.x[i];
      y[i] = g_new[i] - g[i];
    }
    const double improvement = f - f_new;
    res.x = x_new;
    g = g_new;
    f = f_new;
    if (improvement < options.f_tolerance * (1.0 + std::abs(f))) {
      res.converged = true;
      break;
    }
    const double sy = dot(s, y);
    if (sy > 1e-300) {
      if (!scaled) {
        const double gamma = sy / dot(y, y);
        for (std::size_t i = 0; i < n; ++i) h(i, i) = gamma;
        scaled = true;
      }
      std::vector<double> hy(n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) hy[i] += h(i, j) * y[j];
      const double yhy = dot(y, hy);
      const double rho = 1.0 / sy;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          h(i, j) += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
    }
  }
  res.value = f;
  return res;
}

MinimizeResult minimize_nelder_mead(const ScalarObjective& f, std::vector<double> x0,
                                    std::span<const double> initial_step, const NelderMeadOptions& options) {
  const std::size_t n = x0.size();
  if (initial_step.size() != n) throw std::invalid_argument("minimize_nelder_mead: step size mismatch");
  std::vector<std::vector<double>> simplex(n + 1, x0);
  std::vector<double> values(n + 1);
  for (std::size_t i = 0; i < n; ++i) simplex[i + 1][i] += initial_step[i];
  for (std::size_t i = 0; i <= n; ++i) values[i] = f(simplex[i]);

  MinimizeResult res;
  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), trial(n), trial2(n);
  auto evaluate = [&](const std::vector<double>& x) {
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  for (int it = 0; it < options.max_iterations; ++it) {
    res.iterations = it + 1;
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[n - 1];

    double spread = 0.0;
    for (std::size_t i = 0; i <= n; ++i)
      for (std::size_t k = 0; k < n; ++k)
        spread = std::max(spread, std::abs(simplex[i][k] - simplex[best][k]) / std::max(1.0, std::abs(simplex[best][k])));
    if (std::abs(values[worst] - values[best]) <= options.f_tolerance * (1.0 + std::abs(values[best])) &&
        spread <= options.x_tolerance) {
      res.converged = true;
      break;
    }

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i <= n; ++i)
      if (i != worst)
        for (std::size_t k = 0; k < n; ++k) centroid[k] += simplex[i][k] / static_cast<double>(n);

    for (std::size_t k = 0; k < n; ++k) trial[k] = centroid[k] + (centroid[k] - simplex[worst][k]);
    const double fr = evaluate(trial);
    if (fr < values[best]) {
      for (std::size_t k = 0; k < n; ++k) trial2[k] = centroid[k] + 2.0 * (centroid[k] - simplex[worst][k]);
      const double fe = evaluate(trial2);
      if (fe < fr) {
        simplex[worst] = trial2;
        values[worst] = fe;
      } else {
        simplex[worst] = trial;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[second]) {
      simplex[worst] = trial;
      values[worst] = fr;
      continue;
    }
    const bool outside = fr < values[worst];
    for (std::size_t k = 0; k < n; ++k)
      trial2[k] = outside ? centroid[k] + 0.5 * (trial[k] - centroid[k])
                          : centroid[k] + 0.5 * (simplex[worst][k] - centroid[k]);
    const double fc = evaluate(trial2);
    if (fc < std::min(fr, values[worst])) {
      simplex[worst] = trial2;
      values[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == best) continue;
      for (std::size_t k = 0; k < n; ++k) simplex[i][k] = simplex[best][k] + 0.5 * (simplex[i][k] - simplex[best][k]);
      values[i] = evaluate(simplex[i]);
    }
  }
  const auto best_it = std::min_element(values.begin(), values.end());
  res.x = simplex[static_cast<std::size_t>(best_it - values.begin())];
  res.value = *best_it;
  return res;
}

LeastSquaresResult levenberg_marquardt(const ResidualFunction& residuals, std::size_t n_residuals,
                                       std::vector<double> p0, const LmOptions& options) {
  const std::size_t np = p0.size();
  if (n_residuals < np) throw std::invalid_argument("levenberg_marquardt: fewer residuals than parameters");
  LeastSquaresResult res;
  res.params = std::move(p0);
  res.dof = n_residuals - np;

  std::vector<double> r(n_residuals), r_trial(n_residuals), r_step(n_residuals);
  RealMatrix jac(n_residuals, np);
  auto chi2_of = [](std::span<const double> v) { return std::inner_product(v.begin(), v.end(), v.begin(), 0.0); };
  auto jacobian = [&](const std::vector<double>& p) {
    std::vector<double> pp = p;
    for (std::size_t k = 0; k < np; ++k) {
      const double h = step_for(p[k], 1e-7);
      pp[k] = p[k] + h;
      residuals(pp, r_step);
      pp[k] = p[k] - h;
      residuals(pp, r_trial);
      pp[k] = p[k];
      // residual = (y - model)/sigma, so d(model)/dp = -dr/dp; J^T J is sign-agnostic.
      for (std::size_t i = 0; i < n_residuals; ++i) jac(i, k) = (r_step[i] - r_trial[i]) / (2.0 * h);
    }
  };

  residuals(res.params, r);
  double chi2 = chi2_of(r);
  double lambda = 1e-3;
  std::vector<double> trial(np);

  for (int it = 0; it < options.max_iterations; ++it) {
    res.iterations = it + 1;
    jacobian(res.params);
    RealMatrix jtj(np, np);
    std::vector<double> jtr(np, 0.0);
    for (std::size_t i = 0; i < n_residuals; ++i)
      for (std::size_t a = 0; a < np; ++a) {
        jtr[a] -= jac(i, a) * r[i];
        for (std::size_t b = 0; b < np; ++b) jtj(a, b) += jac(i, a) * jac(i, b);
      }
    bool improved = false;
    double new_chi2 = chi2;
    for (int attempt = 0; attempt < 40; ++attempt) {
      RealMatrix damped = jtj;
      for (std::size_t a = 0; a < np; ++a) damped(a, a) += lambda * std::max(jtj(a, a), 1e-300);
      auto inv = invert(damped, 1e-300);
      if (!inv) {
        lambda *= 10.0;
        continue;
      }
      const auto delta = inv->apply(jtr);
      for (std::size_t a = 0; a < np; ++a) trial[a] = res.params[a] + delta[a];
      residuals(trial, r_trial);
      new_chi2 = chi2_of(r_trial);
      if (std::isfinite(new_chi2) && new_chi2 <= chi2) {
        improved = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) {
      res.converged = true;  // no downhill step at any damping: at a minimum
      break;
    }
    const double rel = (chi2 - new_chi2) / std::max(chi2, 1e-300);
    res.params = trial;
    r = r_trial;
    chi2 = new_chi2;
    lambda = std::max(lambda / 10.0, 1e-12);
    if (rel < options.tolerance) {
      res.converged = true;
      break;
    }
  }
  jacobian(res.params);
  RealMatrix jtj(np, np);
  for (std::size_t i = 0; i < n_residuals; ++i)
    for (std::size_t a = 0; a < np; ++a)
      for (std::size_t b = 0; b < np; ++b) jtj(a, b) += jac(i, a) * jac(i, b);
  auto cov = invert(jtj, 1e-15);
  res.covariance = cov ? *cov : RealMatrix(np, np, std::numeric_limits<double>::infinity());
  res.chi2 = chi2;
  return res;
}

std::vector<double> numeric_gradient(const ScalarObjective& f, std::span<const double> x, double rel_step) {
  std::vector<double> xx(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double h = step_for(x[k], rel_step);
    xx[k] = x[k] + h;
    const double fp = f(xx);
    xx[k] = x[k] - h;
    const double fm = f(xx);
    xx[k] = x[k];
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

RealMatrix numeric_hessian(const ScalarObjective& f, std::span<const double> x, double rel_step) {
  const std::size_t n = x.size();
  std::vector<double> xx(x.begin(), x.end());
  RealMatrix hess(n, n);
  const double f0 = f(xx);
  for (std::size_t i = 0; i < n; ++i) {
    const double hi = step_for(x[i], rel_step);
    xx[i] = x[i] + hi;
    const double fp = f(xx);
    xx[i] = x[i] - hi;
    const double fm = f(xx);
    xx[i] = x[i];
    hess(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double hj = step_for(x[j], rel_step);
      double acc = 0.0;
      for (int si : {1, -1})
        for (int sj : {1, -1}) {
          xx[i] = x[i] + si * hi;
          xx[j] = x[j] + sj * hj;
          acc += si * sj * f(xx);
        }
      xx[i] = x[i];
      xx[j] = x[j];
      hess(i, j) = hess(j, i) = acc / (4.0 * hi * hj);
    }
  }
  return hess;
}

}  // namespace qdtb
