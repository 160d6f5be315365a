#pragma once

// Test-only generators and independent oracles.

#include <cmath>
#include <complex>
#include <vector>

#include "qdtb/qcore.hpp"
#include "qdtb/rng.hpp"

namespace qdtb::testing {

inline double uniform_in(CounterRng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

inline ComplexMatrix random_hermitian(CounterRng& rng, std::size_t n, double scale = 1.0) {
  ComplexMatrix m(n);
  for (std::size_t i = 0; i < n; ++i) {
    m(i, i) = scale * rng.normal(0.0, 1.0);
    for (std::size_t j = i + 1; j < n; ++j) {
      const Complex z(scale * rng.normal(0.0, 1.0), scale * rng.normal(0.0, 1.0));
      m(i, j) = z;
      m(j, i) = std::conj(z);
    }
  }
  return m;
}

// Haar-ish random unitary from Gram-Schmidt on a Gaussian matrix.
inline ComplexMatrix random_unitary(CounterRng& rng, std::size_t n) {
  std::vector<std::vector<Complex>> cols(n, std::vector<Complex>(n));
  for (auto& c : cols)
    for (auto& z : c) z = Complex(rng.normal(0.0, 1.0), rng.normal(0.0, 1.0));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < k; ++j) {
      Complex proj = 0.0;
      for (std::size_t i = 0; i < n; ++i) proj += std::conj(cols[j][i]) * cols[k][i];
      for (std::size_t i = 0; i < n; ++i) cols[k][i] -= proj * cols[j][i];
    }
    double norm = 0.0;
    for (const auto& z : cols[k]) norm += std::norm(z);
    norm = std::sqrt(norm);
    for (auto& z : cols[k]) z /= norm;
  }
  ComplexMatrix u(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) u(i, k) = cols[k][i];
  return u;
}

// Random full-rank physical state: G G^dagger / Tr with Gaussian G.
inline DensityMatrix random_density(CounterRng& rng) {
  ComplexMatrix g(4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) g(i, j) = Complex(rng.normal(0.0, 1.0), rng.normal(0.0, 1.0));
  return DensityMatrix::normalized(g * g.adjoint());
}

}  // namespace qdtb::testing
