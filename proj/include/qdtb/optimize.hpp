#pragma once

// Unconstrained minimizers and least squares used by the fitters and the
// tomographic maximum-likelihood reconstruction.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "qdtb/linalg.hpp"

namespace qdtb {

struct MinimizeResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Objective that returns f(x) and writes the gradient into `grad`.
using ValueAndGradient = std::function<double(std::span<const double> x, std::span<double> grad)>;
using ScalarObjective = std::function<double(std::span<const double> x)>;

struct BfgsOptions {
  int max_iterations = 10000;
  // Stop when one iteration improves f by less than this (relative to 1 + |f|).
  double f_tolerance = 1e-10;
  double g_tolerance = 1e-9;
};

MinimizeResult minimize_bfgs(const ValueAndGradient& fg, std::vector<double> x0, const BfgsOptions& options = {});

struct NelderMeadOptions {
  int max_iterations = 20000;
  double f_tolerance = 1e-12;
  double x_tolerance = 1e-10;
};

MinimizeResult minimize_nelder_mead(const ScalarObjective& f, std::vector<double> x0,
                                    std::span<const double> initial_step, const NelderMeadOptions& options = {});

/// Residual callback for weighted least squares: writes r_i = (y_i - model_i) / sigma_i.
using ResidualFunction = std::function<void(std::span<const double> params, std::span<double> residuals)>;

struct LeastSquaresResult {
  std::vector<double> params;
  RealMatrix covariance;  // (J^T J)^{-1}, unscaled
  double chi2 = 0.0;
  std::size_t dof = 0;
  int iterations = 0;
  bool converged = false;
};

struct LmOptions {
  int max_iterations = 500;
  double tolerance = 1e-12;
};

LeastSquaresResult levenberg_marquardt(const ResidualFunction& residuals, std::size_t n_residuals,
                                       std::vector<double> p0, const LmOptions& options = {});

/// Central-difference gradient and Hessian with steps scaled to |x_i|.
std::vector<double> numeric_gradient(const ScalarObjective& f, std::span<const double> x, double rel_step = 1e-6);
RealMatrix numeric_hessian(const ScalarObjective& f, std::span<const double> x, double rel_step = 1e-4);

}  // namespace qdtb
