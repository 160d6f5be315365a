#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "qdtb/cascade.hpp"

using namespace qdtb;

TEST_SUITE("cascade") {
  TEST_CASE("rabi population") {
    CHECK(two_photon_rabi_population(0.0, 0.65) == 0.0);
    CHECK(two_photon_rabi_population(std::numbers::pi, 0.65) == doctest::Approx(0.65).epsilon(1e-15));
    CHECK(two_photon_rabi_population(2.0 * std::numbers::pi, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(two_photon_rabi_population(std::numbers::pi / 2.0, 1.0) == doctest::Approx(0.5));
    CHECK_THROWS(two_photon_rabi_population(-1.0, 1.0));
  }

  TEST_CASE("telegraph stationary fraction and persistence") {
    const double f = 0.625, m = 50.0;
    const auto s = blinking_telegraph(f, m, 2'000'000, 9);
    double on = 0.0;
    for (auto v : s) on += v;
    CHECK(on / static_cast<double>(s.size()) == doctest::Approx(f).epsilon(0.02));
    for (std::int64_t lag : {1, 10, 100}) {
      double both = 0.0, first = 0.0;
      for (std::size_t i = 0; i + lag < s.size(); ++i) {
        first += s[i];
        both += s[i] * s[i + lag];
      }
      CHECK(both / first == doctest::Approx(telegraph_on_persistence(f, m, lag)).epsilon(0.01));
    }
    CHECK(telegraph_on_persistence(f, m, 0) == doctest::Approx(1.0));
    CHECK(telegraph_on_persistence(f, m, 100000) == doctest::Approx(f));
    for (auto v : blinking_telegraph(1.0, m, 1000, 1)) CHECK(v == 1);
  }

  TEST_CASE("single-pulse emission statistics") {
    EmitterParams p;
    const std::int64_t n = 400'000;
    const auto rec = sample_pair_emission(p, PulseTrain::single(std::numbers::pi), n, 21);
    const double rate = static_cast<double>(rec.size()) / static_cast<double>(n);
    CHECK(rate == doctest::Approx(p.blinking_on_fraction * p.p_emit_pi).epsilon(0.02));
    double mxx = 0.0, mx = 0.0;
    for (const auto& r : rec) {
      CHECK(r.t_x_ps >= r.t_xx_ps);
      CHECK(r.excited_by == TimeBin::kEarly);
      mxx += r.t_xx_ps;
      mx += r.t_x_ps - r.t_xx_ps;
    }
    CHECK(mxx / rec.size() == doctest::Approx(p.tau_xx_ps).epsilon(0.01));
    CHECK(mx / rec.size() == doctest::Approx(p.tau_x_ps).epsilon(0.01));
  }

  TEST_CASE("pulse pair: first pulse wins") {
    EmitterParams p;
    p.blinking_on_fraction = 1.0;
    const double area = std::numbers::pi / 2.0;
    const auto rec = sample_pair_emission(p, PulseTrain::pair(3000.0, area, 0.4), 400'000, 22);
    double early = 0.0, late = 0.0;
    for (const auto& r : rec) {
      if (r.excited_by == TimeBin::kEarly) {
        early += 1.0;
        CHECK(r.phase_rad == 0.0);
      } else {
        late += 1.0;
        CHECK(r.phase_rad == 0.4);
        CHECK(r.t_xx_ps >= 3000.0);
      }
    }
    const double q = two_photon_rabi_population(area, p.p_emit_pi);
    CHECK(early / 400'000 == doctest::Approx(q).epsilon(0.02));
    CHECK(late / 400'000 == doctest::Approx((1.0 - q) * q).epsilon(0.02));
  }

  TEST_CASE("output independent of thread count") {
    EmitterParams p;
    p.two_pair_prob = 0.01;
    SamplingOptions one{1, 1 << 12}, four{4, 1 << 12};
    const auto a = sample_pair_emission(p, PulseTrain::single(std::numbers::pi), 50'000, 5, one);
    const auto b = sample_pair_emission(p, PulseTrain::single(std::numbers::pi), 50'000, 5, four);
    CHECK(a == b);
    const auto c = sample_pair_emission(p, PulseTrain::single(std::numbers::pi), 50'000, 6, one);
    CHECK(a != c);
  }

  TEST_CASE("extra-pair probability inverts the g2 relation") {
    for (double g : {0.005, 0.016, 0.025, 0.1}) {
      const double p = 0.65, f = 0.625;
      const double q = two_pair_prob_for_g2(g, p, f);
      CHECK(q > 0.0);
      CHECK(q < p);
      CHECK(2.0 * p * q / (f * (p + q) * (p + q)) == doctest::Approx(g).epsilon(1e-12));
    }
    CHECK(two_pair_prob_for_g2(0.0, 0.65, 0.625) == 0.0);
  }

  TEST_CASE("parameter validation") {
    EmitterParams p;
    p.p_emit_pi = 1.5;
    CHECK_THROWS(p.validate());
    p = {};
    p.tau_xx_ps = 0.0;
    CHECK_THROWS(p.validate());
    CHECK_THROWS(blinking_telegraph(0.0, 50.0, 10, 1));
    CHECK_THROWS(blinking_telegraph(0.99, 1.0, 10, 1));
  }
}
