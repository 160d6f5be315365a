#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "doctest.h"
#include "qdtb/error.hpp"
#include "qdtb/optics.hpp"
#include "qdtb/rng.hpp"
#include "qdtb/tomo.hpp"
#include "test_helpers.hpp"

using namespace qdtb;

namespace {

// Independent single-photon kets in the (e, l) basis.
std::array<Complex, 2> ket(char p) {
  const double s = 1.0 / std::sqrt(2.0);
  switch (p) {
    case 'E': return {1.0, 0.0};
    case 'L': return {0.0, 1.0};
    case 'P': return {s, s};
    default: return {s, Complex(0.0, s)};
  }
}

double projector_expectation(const DensityMatrix& rho, char a, char b) {
  const auto u = ket(a), v = ket(b);
  std::array<Complex, 4> psi{u[0] * v[0], u[0] * v[1], u[1] * v[0], u[1] * v[1]};
  Complex acc = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) acc += std::conj(psi[i]) * rho(i, j) * psi[j];
  return acc.real();
}

// conj((X (x) X) m (X (x) X)): the state seen after relabelling e <-> l.
ComplexMatrix relabelled(const ComplexMatrix& m) {
  ComplexMatrix out(4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) out(i, j) = std::conj(m(3 - i, 3 - j));
  return out;
}

Projector swapped(Projector p) {
  if (p == Projector::kEarly) return Projector::kLate;
  if (p == Projector::kLate) return Projector::kEarly;
  return p;
}

void check_physical(const DensityMatrix& rho) {
  CHECK(rho.matrix().trace().real() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::abs(rho.matrix().trace().imag()) < 1e-12);
  CHECK(max_abs_diff(rho.matrix(), rho.matrix().adjoint()) < 1e-12);
  for (double e : hermitian_eigensystem(rho.matrix()).values) CHECK(e > -1e-10);
}

}  // namespace

TEST_SUITE("tomo") {
  TEST_CASE("settings are XX-major over E, L, P, Pi") {
    const auto s = tomography_settings();
    const char* labels = "ELPI";
    for (std::size_t i = 0; i < kSettingCount; ++i) {
      CHECK(setting_index(s[i]) == i);
      CHECK(static_cast<std::size_t>(s[i].xx) == i / 4);
      CHECK(static_cast<std::size_t>(s[i].x) == i % 4);
      CHECK(projector_from_label(label(s[i].xx)) == s[i].xx);
      (void)labels;
    }
    CHECK(std::string(label(Projector::kPlusI)) == "Pi");
    CHECK_THROWS_AS(projector_from_label("Q"), DataError);
  }

  TEST_CASE("expected probabilities match direct projections") {
    auto rng = CounterRng::from_seed(30);
    const std::string names = "ELPI";
    for (int t = 0; t < 20; ++t) {
      const auto rho = testing::random_density(rng);
      for (const auto& s : tomography_settings()) {
        const char a = names[static_cast<std::size_t>(s.xx)], b = names[static_cast<std::size_t>(s.x)];
        CHECK(expected_probability(rho, s) == doctest::Approx(projector_expectation(rho, a, b)).epsilon(1e-13));
      }
    }
  }

  TEST_CASE("linear inversion is exact on noise-free probabilities") {
    auto rng = CounterRng::from_seed(31);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      const auto rho = testing::random_density(rng);
      std::array<double, kSettingCount> p{};
      for (const auto& s : tomography_settings()) p[setting_index(s)] = expected_probability(rho, s);
      worst = std::max(worst, max_abs_diff(linear_reconstruct(p), rho.matrix()));
    }
    CHECK(worst < 1e-9);
  }

  TEST_CASE("MLE output is always physical") {
    auto rng = CounterRng::from_seed(32);
    for (int t = 0; t < 30; ++t) {
      CountsTable c;
      c.acquisition_cycles = 1000;
      c.efficiency_product = 0.1;
      c.slot_weighted = (t % 2) == 1;
      for (auto& n : c.counts) n = rng.bernoulli(0.3) ? 0 : rng.poisson(testing::uniform_in(rng, 1.0, 80.0));
      c.counts[0] = std::max<std::uint64_t>(c.counts[0], 1);
      const auto r = mle_reconstruct(c);
      check_physical(r.rho);
      CHECK(std::isfinite(r.log_likelihood));
    }
  }

  TEST_CASE("MLE recovers the state from expected counts") {
    auto rng = CounterRng::from_seed(33);
    for (int t = 0; t < 5; ++t) {
      const auto rho = testing::random_density(rng);
      const auto c = expected_counts(rho, 100'000'000, 1.0);
      const auto r = mle_reconstruct(c);
      CHECK(r.converged);
      CHECK(max_abs_diff(r.rho.matrix(), rho.matrix()) < 1e-3);
    }
  }

  TEST_CASE("MLE likelihood dominates the true state and the linear start") {
    TimebinStateModel m;
    const auto rho = ideal_timebin_density(m);
    const auto c = simulate_counts(rho, 200'000, 0.003, 77);
    const auto r = mle_reconstruct(c);
    CHECK(r.log_likelihood >= poisson_log_likelihood(c, rho) - 1e-9);
    CHECK(r.log_likelihood >= poisson_log_likelihood(c, project_to_physical(linear_reconstruct(c))) - 1e-9);
  }

  TEST_CASE("relabelling early and late conjugates the flipped state") {
    auto rng = CounterRng::from_seed(34);
    for (int t = 0; t < 3; ++t) {
      const auto rho = testing::random_density(rng);
      const auto c = simulate_counts(rho, 2000, 1.0, 100 + t);
      CountsTable sw = c;
      for (const auto& s : tomography_settings())
        sw.counts[setting_index({swapped(s.xx), swapped(s.x)})] = c.counts[setting_index(s)];
      // Pi maps to its conjugate ket under the swap, up to a global phase,
      // so the swapped table is the table of conj(X rho X).
      const auto a = mle_reconstruct(c), b = mle_reconstruct(sw);
      CHECK(max_abs_diff(b.rho.matrix(), relabelled(a.rho.matrix())) < 2e-3);
    }
  }

  TEST_CASE("slot weights scale exposures") {
    CountsTable c;
    c.acquisition_cycles = 100;
    c.efficiency_product = 0.5;
    CHECK(c.exposure(0) == doctest::Approx(50.0));
    c.slot_weighted = true;
    const auto s = tomography_settings();
    CHECK(c.exposure(setting_index({Projector::kEarly, Projector::kLate})) == doctest::Approx(50.0 / 16.0));
    CHECK(c.exposure(setting_index({Projector::kPlus, Projector::kEarly})) == doctest::Approx(50.0 / 8.0));
    CHECK(c.exposure(setting_index({Projector::kPlus, Projector::kPlusI})) == doctest::Approx(50.0 / 4.0));
    (void)s;
  }

  TEST_CASE("background subtraction clamps at zero") {
    TimebinStateModel m;
    const auto c = expected_counts(ideal_timebin_density(m), 1000, 1.0);
    ReconstructionOptions opt;
    opt.flat_background = 1e9;
    CHECK_THROWS(linear_reconstruct(c, opt));
  }

  TEST_CASE("Monte-Carlo errors are deterministic and thread-independent") {
    TimebinStateModel m;
    const auto c = simulate_counts(ideal_timebin_density(m), 100'000, 0.002, 5);
    const auto a = monte_carlo_errors(c, 12, 9, 1);
    const auto b = monte_carlo_errors(c, 12, 9, 3);
    CHECK(a.concurrence_err == b.concurrence_err);
    CHECK(a.fidelity_err == b.fidelity_err);
    CHECK(a.concurrence_err > 0.0);
    const auto zero = monte_carlo_errors(c, 5, 9, 1, {}, [](std::uint64_t n, CounterRng&) { return n; });
    CHECK(zero.concurrence_err == doctest::Approx(0.0).epsilon(1e-9));
  }

  TEST_CASE("counts CSV round trip and malformed rows") {
    TimebinStateModel m;
    auto c = simulate_counts(ideal_timebin_density(m), 5000, 0.1, 6);
    c.slot_weighted = true;
    const auto back = parse_counts_csv(counts_csv(c));
    CHECK(back.counts == c.counts);
    CHECK(back.acquisition_cycles == c.acquisition_cycles);
    CHECK(back.efficiency_product == c.efficiency_product);
    CHECK(back.slot_weighted);

    std::string text = counts_csv(c);
    const auto pos = text.find("E,L,");
    text.replace(pos, text.find('\n', pos) - pos, "E,L,abc");
    try {
      (void)parse_counts_csv(text, "t.csv");
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("t.csv") != std::string::npos);
      CHECK(std::string(e.what()).find("line") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_counts_csv("xx_proj,x_proj,count\nE,E,1\n"), DataError);
  }

  TEST_CASE("experiment reads slot pairs with the expected pattern") {
    TimebinSetup s;
    const auto c = tomography_experiment(s, 200'000, 3, {2});
    CHECK(c.slot_weighted);
    CHECK(c.counts[setting_index({Projector::kEarly, Projector::kLate})] <= 2);
    CHECK(c.counts[setting_index({Projector::kLate, Projector::kEarly})] <= 2);
    CHECK(c.counts[setting_index({Projector::kEarly, Projector::kEarly})] > 50);
    CHECK(c.counts[setting_index({Projector::kPlus, Projector::kPlus})] >
          2 * c.counts[setting_index({Projector::kEarly, Projector::kEarly})]);
    const auto again = tomography_experiment(s, 200'000, 3, {1});
    CHECK(again.counts == c.counts);
  }
}
