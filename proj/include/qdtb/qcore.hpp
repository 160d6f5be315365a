#pragma once

// Complex linear algebra and two-qubit entanglement metrics.
//
// Two-photon basis order is fixed everywhere: index 0..3 = (early,early),
// (early,late), (late,early), (late,late), where the first letter is the
// biexciton photon and the second the exciton photon.

#include <array>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace qdtb {

using Complex = std::complex<double>;

enum BasisIndex : std::size_t { kEE = 0, kEL = 1, kLE = 2, kLL = 3 };

class ComplexMatrix {
 public:
  ComplexMatrix() = default;
  explicit ComplexMatrix(std::size_t dim) : dim_(dim), data_(dim * dim) {}
  ComplexMatrix(std::initializer_list<std::initializer_list<Complex>> rows);

  static ComplexMatrix identity(std::size_t dim);
  static ComplexMatrix diagonal(std::span<const double> values);

  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  Complex& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * dim_ + c]; }
  const Complex& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * dim_ + c]; }
  [[nodiscard]] std::span<const Complex> data() const noexcept { return data_; }

  [[nodiscard]] ComplexMatrix adjoint() const;
  [[nodiscard]] ComplexMatrix conjugate() const;
  [[nodiscard]] Complex trace() const;
  /// max |m - m^dagger| over all entries.
  [[nodiscard]] double hermiticity_defect() const;
  [[nodiscard]] bool all_finite() const;

  ComplexMatrix& operator+=(const ComplexMatrix& o);
  ComplexMatrix& operator-=(const ComplexMatrix& o);
  ComplexMatrix& operator*=(Complex s);

  friend ComplexMatrix operator+(ComplexMatrix a, const ComplexMatrix& b) { return a += b; }
  friend ComplexMatrix operator-(ComplexMatrix a, const ComplexMatrix& b) { return a -= b; }
  friend ComplexMatrix operator*(ComplexMatrix a, Complex s) { return a *= s; }
  friend ComplexMatrix operator*(Complex s, ComplexMatrix a) { return a *= s; }
  friend ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b);

 private:
  std::size_t dim_ = 0;
  std::vector<Complex> data_;
};

double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b);
/// |ket><bra|
ComplexMatrix outer(std::span<const Complex> ket, std::span<const Complex> bra);
/// Tr(a * b) without forming the product.
Complex trace_of_product(const ComplexMatrix& a, const ComplexMatrix& b);

struct Eigensystem {
  std::vector<double> values;  // descending
  ComplexMatrix vectors;       // column k belongs to values[k]
};

/// Cyclic Jacobi diagonalisation of a Hermitian matrix. Throws
/// std::invalid_argument when max |m - m^dagger| exceeds 1e-10.
Eigensystem hermitian_eigensystem(const ComplexMatrix& m);

/// V f(diag) V^dagger for a Hermitian matrix.
template <class Fn>
ComplexMatrix hermitian_function(const ComplexMatrix& m, Fn&& fn) {
  const Eigensystem es = hermitian_eigensystem(m);
  const std::size_t n = m.dim();
  ComplexMatrix out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double f = fn(es.values[k]);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out(i, j) += f * es.vectors(i, k) * std::conj(es.vectors(j, k));
  }
  return out;
}

class TwoQubitState {
 public:
  explicit TwoQubitState(const std::array<Complex, 4>& amplitudes);

  /// (|ee> + e^{i phase} |ll>) / sqrt(2).
  static TwoQubitState phi_plus(double phase = 0.0);

  [[nodiscard]] const std::array<Complex, 4>& amplitudes() const noexcept { return amplitudes_; }
  [[nodiscard]] ComplexMatrix projector() const;

 private:
  std::array<Complex, 4> amplitudes_;
};

class DensityMatrix {
 public:
  static constexpr double kHermitianTolerance = 1e-12;
  static constexpr double kTraceTolerance = 1e-12;
  static constexpr double kPositivityTolerance = -1e-9;

  /// Validates Hermiticity, unit trace and positivity; throws
  /// std::invalid_argument naming the failed invariant.
  explicit DensityMatrix(ComplexMatrix m);

  /// Symmetrises (m + m^dagger)/2 and divides by the trace before validating.
  static DensityMatrix normalized(const ComplexMatrix& m);
  static DensityMatrix from_state(const TwoQubitState& psi);
  static DensityMatrix maximally_mixed();
  /// p |phi+><phi+| + (1 - p) I/4
  static DensityMatrix werner(double p);

  [[nodiscard]] const ComplexMatrix& matrix() const noexcept { return m_; }
  const Complex& operator()(std::size_t r, std::size_t c) const noexcept { return m_(r, c); }

 private:
  ComplexMatrix m_;
};

/// Clip negative eigenvalues and renormalise the trace.
DensityMatrix project_to_physical(const ComplexMatrix& m);

double concurrence(const DensityMatrix& rho);
double fidelity_to_state(const DensityMatrix& rho, const TwoQubitState& target);
double purity(const DensityMatrix& rho);
/// max over theta of <phi+(theta)|rho|phi+(theta)>.
double max_bell_phase_fidelity(const DensityMatrix& rho);

nlohmann::json to_json(const ComplexMatrix& m);
ComplexMatrix complex_matrix_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DensityMatrix& rho);
DensityMatrix density_matrix_from_json(const nlohmann::json& j);

}  // namespace qdtb
