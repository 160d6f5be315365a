#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "qdtb/qcore.hpp"
#include "qdtb/rng.hpp"
#include "test_helpers.hpp"

using namespace qdtb;

namespace {

// Characteristic polynomial coefficients by Faddeev-LeVerrier:
// det(xI - A) = x^n + c[n-1] x^{n-1} + ... + c[0].
std::vector<double> characteristic_polynomial(const ComplexMatrix& a) {
  const std::size_t n = a.dim();
  std::vector<double> c(n + 1, 0.0);
  c[n] = 1.0;
  ComplexMatrix m(n);  // M_0 = 0
  for (std::size_t k = 1; k <= n; ++k) {
    ComplexMatrix next = a * m + ComplexMatrix::identity(n) * Complex(c[n - k + 1]);
    m = next;
    c[n - k] = -(a * m).trace().real() / static_cast<double>(k);
  }
  return c;
}

double eval_poly(const std::vector<double>& c, double x) {
  double v = 0.0;
  for (std::size_t k = c.size(); k-- > 0;) v = v * x + c[k];
  return v;
}

// All real roots via sign changes on a fine grid refined by bisection.
std::vector<double> polynomial_roots(const std::vector<double>& c, double bound) {
  std::vector<double> roots;
  const int steps = 200000;
  double x0 = -bound, f0 = eval_poly(c, x0);
  for (int i = 1; i <= steps; ++i) {
    const double x1 = -bound + 2.0 * bound * i / steps;
    const double f1 = eval_poly(c, x1);
    if (f0 == 0.0) roots.push_back(x0);
    else if (f0 * f1 < 0.0) {
      double lo = x0, hi = x1, flo = f0;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = eval_poly(c, mid);
        if (flo * fm <= 0.0) hi = mid;
        else {
          lo = mid;
          flo = fm;
        }
      }
      roots.push_back(0.5 * (lo + hi));
    }
    x0 = x1;
    f0 = f1;
  }
  std::sort(roots.begin(), roots.end(), std::greater<>());
  return roots;
}

}  // namespace

TEST_SUITE("qcore") {
  TEST_CASE("eigensystem of trivial matrices") {
    const auto id = hermitian_eigensystem(ComplexMatrix::identity(4));
    for (double v : id.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));

    const std::vector<double> d{3.0, 1.0, -2.0};
    const auto es = hermitian_eigensystem(ComplexMatrix::diagonal(d));
    CHECK(es.values == std::vector<double>{3.0, 1.0, -2.0});
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(es.vectors(k, k)) == doctest::Approx(1.0));
  }

  TEST_CASE("eigenvalues match characteristic polynomial roots") {
    auto rng = CounterRng::from_seed(11);
    for (int trial = 0; trial < 20; ++trial) {
      const auto m = testing::random_hermitian(rng, 4);
      const auto es = hermitian_eigensystem(m);
      double bound = 0.0;  // Gershgorin
      for (std::size_t i = 0; i < 4; ++i) {
        double r = 0.0;
        for (std::size_t j = 0; j < 4; ++j) r += std::abs(m(i, j));
        bound = std::max(bound, r);
      }
      const auto roots = polynomial_roots(characteristic_polynomial(m), bound + 1.0);
      REQUIRE(roots.size() == 4);
      for (std::size_t k = 0; k < 4; ++k) CHECK(es.values[k] == doctest::Approx(roots[k]).epsilon(1e-8));
    }
  }

  TEST_CASE("eigensystem residual and orthonormality over 1000 random matrices") {
    auto rng = CounterRng::from_seed(12);
    double worst_residual = 0.0, worst_orth = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t n = 2 + static_cast<std::size_t>(trial % 7);
      const auto m = testing::random_hermitian(rng, n);
      const auto es = hermitian_eigensystem(m);
      const auto mv = m * es.vectors;
      const auto vl = es.vectors * ComplexMatrix::diagonal(es.values);
      worst_residual = std::max(worst_residual, max_abs_diff(mv, vl));
      worst_orth = std::max(worst_orth, max_abs_diff(es.vectors.adjoint() * es.vectors, ComplexMatrix::identity(n)));
      const auto rebuilt = es.vectors * ComplexMatrix::diagonal(es.values) * es.vectors.adjoint();
      CHECK(max_abs_diff(rebuilt, m) < 1e-9);
      CHECK(std::is_sorted(es.values.begin(), es.values.end(), std::greater<>()));
    }
    CHECK(worst_residual < 1e-9);
    CHECK(worst_orth < 1e-10);
  }

  TEST_CASE("non-Hermitian input is rejected with the defect norm") {
    ComplexMatrix m = ComplexMatrix::identity(3);
    m(0, 1) = 0.5;
    try {
      (void)hermitian_eigensystem(m);
      FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("0.5") != std::string::npos);
    }
  }

  TEST_CASE("concurrence reference states") {
    CHECK(concurrence(DensityMatrix::from_state(TwoQubitState::phi_plus())) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(concurrence(DensityMatrix::maximally_mixed()) == doctest::Approx(0.0));
    CHECK(concurrence(DensityMatrix::werner(0.8)) == doctest::Approx(0.7).epsilon(1e-12));
    for (double p : {0.1, 1.0 / 3.0, 0.5, 0.9}) {
      CHECK(concurrence(DensityMatrix::werner(p)) == doctest::Approx(std::max(0.0, (3.0 * p - 1.0) / 2.0)).epsilon(1e-10));
    }
  }

  TEST_CASE("concurrence direct eigenvalue oracle") {
    // Independent route: eigenvalues of the non-Hermitian rho*tilde via its
    // characteristic polynomial (real, non-negative roots).
    auto rng = CounterRng::from_seed(13);
    for (int trial = 0; trial < 20; ++trial) {
      const auto rho = testing::random_density(rng);
      ComplexMatrix yy(4);
      yy(0, 3) = -1.0;
      yy(1, 2) = 1.0;
      yy(2, 1) = 1.0;
      yy(3, 0) = -1.0;
      const auto r = rho.matrix() * (yy * rho.matrix().conjugate() * yy);
      auto roots = polynomial_roots(characteristic_polynomial(r), 2.0);
      // Degenerate roots can be missed by sign changes; skip those draws.
      if (roots.size() != 4) continue;
      for (auto& x : roots) x = std::sqrt(std::max(x, 0.0));
      const double expected = std::max(0.0, roots[0] - roots[1] - roots[2] - roots[3]);
      CHECK(concurrence(rho) == doctest::Approx(expected).epsilon(1e-7));
    }
  }

  TEST_CASE("concurrence is invariant under local unitaries") {
    auto rng = CounterRng::from_seed(14);
    for (int trial = 0; trial < 200; ++trial) {
      const auto rho = testing::random_density(rng);
      const auto uv = kron(testing::random_unitary(rng, 2), testing::random_unitary(rng, 2));
      const auto rotated = DensityMatrix::normalized(uv * rho.matrix() * uv.adjoint());
      CHECK(std::abs(concurrence(rho) - concurrence(rotated)) < 1e-9);
    }
  }

  TEST_CASE("fidelity and purity") {
    const auto phi = TwoQubitState::phi_plus();
    CHECK(fidelity_to_state(DensityMatrix::from_state(phi), phi) == doctest::Approx(1.0));
    CHECK(fidelity_to_state(DensityMatrix::maximally_mixed(), TwoQubitState({0.0, 1.0, 0.0, 0.0})) == doctest::Approx(0.25));
    CHECK(fidelity_to_state(DensityMatrix::werner(0.8), phi) == doctest::Approx(0.85).epsilon(1e-12));
    CHECK(purity(DensityMatrix::from_state(phi)) == doctest::Approx(1.0));
    CHECK(purity(DensityMatrix::maximally_mixed()) == doctest::Approx(0.25));
    CHECK(purity(DensityMatrix::werner(0.8)) == doctest::Approx(0.8 * 0.8 + (1.0 - 0.64) / 4.0).epsilon(1e-12));
    CHECK(max_bell_phase_fidelity(DensityMatrix::from_state(TwoQubitState::phi_plus(1.1))) == doctest::Approx(1.0));
  }

  TEST_CASE("fidelity equals trace of rho times projector") {
    auto rng = CounterRng::from_seed(15);
    for (int trial = 0; trial < 200; ++trial) {
      const auto rho = testing::random_density(rng);
      std::array<Complex, 4> amp{};
      double norm = 0.0;
      for (auto& a : amp) {
        a = Complex(rng.normal(0.0, 1.0), rng.normal(0.0, 1.0));
        norm += std::norm(a);
      }
      for (auto& a : amp) a /= std::sqrt(norm);
      const TwoQubitState psi(amp);
      const double direct = (rho.matrix() * psi.projector()).trace().real();
      CHECK(std::abs(fidelity_to_state(rho, psi) - direct) < 1e-12);
    }
  }

  TEST_CASE("density matrix invariants are enforced") {
    ComplexMatrix m = ComplexMatrix::identity(4) * Complex(0.25);
    m(0, 0) = 0.3;
    CHECK_THROWS_AS(DensityMatrix{m}, std::invalid_argument);
    ComplexMatrix neg = ComplexMatrix::diagonal(std::vector<double>{0.6, 0.6, -0.1, -0.1});
    CHECK_THROWS_AS(DensityMatrix{neg}, std::invalid_argument);
    const auto fixed = project_to_physical(neg);
    CHECK(fixed(0, 0).real() == doctest::Approx(0.5));
    CHECK(fixed(3, 3).real() == doctest::Approx(0.0));
  }

  TEST_CASE("JSON round trip is bit exact") {
    auto rng = CounterRng::from_seed(16);
    for (int trial = 0; trial < 100; ++trial) {
      const auto rho = testing::random_density(rng);
      const std::string text = to_json(rho).dump();
      const auto back = density_matrix_from_json(nlohmann::json::parse(text));
      for (std::size_t i = 0; i < 16; ++i) {
        CHECK(back.matrix().data()[i].real() == rho.matrix().data()[i].real());
        CHECK(back.matrix().data()[i].imag() == rho.matrix().data()[i].imag());
      }
    }
    CHECK_THROWS(density_matrix_from_json(nlohmann::json::parse(R"({"re": [[1]]})")));
  }
}
