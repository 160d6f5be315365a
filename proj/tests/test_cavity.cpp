#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "qdtb/cavity.hpp"
#include "qdtb/error.hpp"
#include "qdtb/rng.hpp"
#include "test_helpers.hpp"

using namespace qdtb;

namespace {

CavityDesign matched_design(double lambda0) {
  CavityDesign d;
  d.t_gaas_nm = lambda0 / (4.0 * d.n_gaas);
  d.t_alas_nm = lambda0 / (4.0 * d.n_alas);
  d.t_cavity_nm = lambda0 / d.n_gaas;
  return d;
}

double sq(double x) { return x * x; }

}  // namespace

TEST_SUITE("cavity") {
  TEST_CASE("bare interface and absentee layers") {
    LayerStack s;
    s.substrate_index = 3.48;
    const double fresnel = sq((1.0 - 3.48) / (1.0 + 3.48));
    CHECK(reflect_transmit(s, 900.0).reflectance == doctest::Approx(fresnel).epsilon(1e-14));
    s.layers = {{2.0, 500.0 / (2.0 * 2.0)}};  // half wave at 500 nm
    CHECK(reflect_transmit(s, 500.0).reflectance == doctest::Approx(fresnel).epsilon(1e-12));
    s.layers = {{2.0, 500.0 / (4.0 * 2.0)}};  // quarter wave
    CHECK(reflect_transmit(s, 500.0).reflectance == doctest::Approx(sq((3.48 - 4.0) / (3.48 + 4.0))).epsilon(1e-12));
  }

  TEST_CASE("quarter-wave mirror matches the closed form") {
    // Quarter-wave pair product is diag((-nL/nH)^N ... ) for [nH, nL] x N.
    const double l0 = 936.0, nh = 3.48, nl = 2.95, ns = 3.48;
    for (int pairs : {1, 5, 24}) {
      const auto stack = dbr_stack(matched_design(l0), pairs);
      const double b = std::pow(nl / nh, pairs), c = ns * std::pow(nh / nl, pairs);
      const double expect = sq((b - c) / (b + c));
      CHECK(reflect_transmit(stack, l0).reflectance == doctest::Approx(expect).epsilon(1e-10));
    }
    CHECK(reflect_transmit(dbr_stack(CavityDesign{}, 24), 936.0).reflectance > 0.99);
  }

  TEST_CASE("energy conservation on random lossless stacks") {
    auto rng = CounterRng::from_seed(40);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      LayerStack s;
      s.substrate_index = testing::uniform_in(rng, 1.0, 4.0);
      s.ambient_index = testing::uniform_in(rng, 1.0, 2.0);
      const int n = 1 + static_cast<int>(testing::uniform_in(rng, 0.0, 40.0));
      for (int i = 0; i < n; ++i) s.layers.push_back({testing::uniform_in(rng, 1.3, 3.6), testing::uniform_in(rng, 10.0, 300.0)});
      for (double wl = 700.0; wl <= 1200.0; wl += 25.0) {
        const auto p = reflect_transmit(s, wl);
        worst = std::max(worst, std::abs(p.reflectance + p.transmittance - 1.0));
      }
    }
    CHECK(worst < 1e-9);
  }

  TEST_CASE("characteristic matrix is unimodular") {
    const std::vector<Layer> layers{{3.48, 68.0}, {2.95, 82.0}, {3.48, 270.0}};
    const auto m = characteristic_matrix(layers, 936.0);
    const Complex det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    CHECK(std::abs(det - Complex(1.0)) < 1e-12);
  }

  TEST_CASE("matched cavity resonates at the design wavelength") {
    const auto stack = cavity_stack(matched_design(936.0));
    REQUIRE(stack.cavity_layer.has_value());
    const auto r = cavity_resonance_and_q(stack);
    CHECK(r.wavelength_nm == doctest::Approx(936.0).epsilon(1e-4));
    CHECK(r.q == doctest::Approx(r.wavelength_nm / r.fwhm_nm));
    auto more = matched_design(936.0);
    more.top_pairs = 10;
    CHECK(cavity_resonance_and_q(cavity_stack(more)).q > 2.0 * r.q);
    ScanRange narrow{700.0, 750.0, 0.05};
    CHECK_THROWS_AS(cavity_resonance_and_q(stack, narrow), ConvergenceError);
  }

  TEST_CASE("penetration depth follows the reflection phase slope") {
    const auto [top, bottom] = cavity_mirrors(cavity_stack(matched_design(936.0)));
    const double wl = 936.0, h = 1e-3;
    const double dphi = std::arg(reflect_transmit(bottom, wl + h).r / reflect_transmit(bottom, wl - h).r) / (2.0 * h);
    const double expect = wl * wl / (4.0 * std::numbers::pi * bottom.ambient_index) * std::abs(dphi);
    CHECK(penetration_depth_nm(bottom, wl) == doctest::Approx(expect).epsilon(1e-4));
    CHECK(penetration_depth_nm(top, wl) > 0.0);
    const auto stack = cavity_stack(matched_design(936.0));
    CHECK(effective_length_nm(stack, wl) ==
          doctest::Approx(936.0 / 3.48 + penetration_depth_nm(top, wl) + penetration_depth_nm(bottom, wl)).epsilon(1e-9));
  }

  TEST_CASE("mode waist and Purcell formula") {
    DefectModel d;
    const double l = 600.0, n = 3.48, wl = 936.0;
    const double rc = (sq(d.diameter_nm) / 4.0 + sq(d.height_nm)) / (2.0 * d.height_nm);
    const double w = std::sqrt(wl / (std::numbers::pi * n) * std::sqrt(l * (rc - l)));
    CHECK(mode_waist_nm(d, wl, n, l) == doctest::Approx(std::min(w, d.diameter_nm / 2.0)));
    d.height_nm = 0.5;
    CHECK(mode_waist_nm(d, wl, n, l) == doctest::Approx(d.diameter_nm / 2.0));
    d.waist_override_nm = 700.0;
    CHECK(mode_waist_nm(d, wl, n, l) == 700.0);
    const double v = std::numbers::pi / 4.0 * sq(900.0) * l;
    CHECK(purcell_factor(200.0, wl, n, 900.0, l) ==
          doctest::Approx(3.0 / (4.0 * sq(std::numbers::pi)) * std::pow(wl / n, 3) * 200.0 / v));
  }

  TEST_CASE("Purcell factor limits") {
    const double f1 = purcell_factor(100.0, 936.0, 3.48, 800.0, 600.0);
    CHECK(purcell_factor(300.0, 936.0, 3.48, 800.0, 600.0) == doctest::Approx(3.0 * f1));
    CHECK(purcell_factor(100.0, 936.0, 3.48, 1e9, 600.0) < 1e-9);
    DefectModel flat;
    flat.height_nm = 1e-6;
    CHECK(mode_waist_nm(flat, 936.0, 3.48, 600.0) == doctest::Approx(flat.diameter_nm / 2.0));
  }

  TEST_CASE("Purcell spectrum peaks at the resonance") {
    const auto est = purcell_estimate(cavity_stack(), DefectModel{});
    const double c = est.resonance.wavelength_nm, g = est.resonance.fwhm_nm;
    const std::vector<double> wl{c, c + g / 2.0, c + 10.0 * g};
    const auto s = purcell_spectrum(est, wl);
    CHECK(s[0].second == doctest::Approx(est.purcell));
    CHECK(s[1].second == doctest::Approx(est.purcell / 2.0));
    CHECK(s[2].second < est.purcell / 50.0);
  }

  TEST_CASE("NA collection fraction") {
    double prev = 0.0;
    for (double na : {0.1, 0.3, 0.5, 0.62, 0.7, 0.9, 1.0}) {
      const double f = na_collection_fraction(800.0, 936.0, na);
      CHECK(f > prev);
      CHECK(f <= 1.0 + 1e-12);
      prev = f;
    }
    CHECK(na_collection_fraction(800.0, 936.0, 1.0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(na_collection_fraction(50000.0, 936.0, 0.3) > 0.999);
    CHECK_THROWS(na_collection_fraction(800.0, 936.0, 0.0));
    CHECK_THROWS(na_collection_fraction(800.0, 936.0, 1.2));
  }

  TEST_CASE("top emission fraction bounded by beta") {
    const auto stack = cavity_stack();
    for (double f : {0.5, 1.0, 3.0}) {
      const double t = top_emission_fraction(stack, 940.0, f);
      CHECK(t > 0.0);
      CHECK(t < f / (f + 1.0));
    }
  }

  TEST_CASE("efficiency budget arithmetic") {
    EfficiencyBudget b;
    b.count_rate_hz = 61000.0;
    CHECK(std::abs(efficiency_budget(b).eta_first_lens - 61000.0 / 390000.0) < 1e-12);
    CHECK(std::abs(efficiency_budget(b).eta_first_lens - 0.156410256410256) < 1e-12);
    b.count_rate_hz = 26000.0;
    b.eta_fiber = 0.18;
    CHECK(std::abs(efficiency_budget(b).denominator - 175500.0) < 1e-6);
    CHECK(std::abs(efficiency_budget(b).eta_first_lens - 26000.0 / 175500.0) < 1e-12);
    b.count_rate_hz = -1.0;
    CHECK_THROWS(efficiency_budget(b));
  }

  TEST_CASE("stack CSV round trip and errors") {
    const auto s = cavity_stack();
    const auto back = parse_stack_csv(stack_csv(s));
    REQUIRE(back.layers.size() == s.layers.size());
    CHECK(back.cavity_layer == s.cavity_layer);
    CHECK(back.substrate_index == s.substrate_index);
    for (std::size_t i = 0; i < s.layers.size(); ++i) CHECK(back.layers[i].thickness_nm == s.layers[i].thickness_nm);
    CHECK_THROWS_AS(parse_stack_csv("index,thickness_nm\n3.48,-5\n"), DataError);
    CHECK_THROWS_AS(parse_stack_csv("index,thickness_nm\n3.48\n"), DataError);
  }
}
