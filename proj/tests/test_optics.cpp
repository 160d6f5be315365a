#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "qdtb/optics.hpp"
#include "qdtb/rng.hpp"
#include "test_helpers.hpp"

using namespace qdtb;

namespace {

// Brute-force start-stop pairing over all event pairs.
std::vector<std::uint64_t> brute_histogram(const std::vector<PhotonEvent>& ev, int a, int b, double w, double range) {
  const auto bins = static_cast<std::size_t>(std::llround(2.0 * range / w));
  std::vector<std::uint64_t> h(bins, 0);
  for (std::size_t i = 0; i < ev.size(); ++i)
    for (std::size_t j = 0; j < ev.size(); ++j) {
      if (i == j || ev[i].channel != a || ev[j].channel != b) continue;
      const double d = static_cast<double>(ev[j].timestamp_ps - ev[i].timestamp_ps);
      if (d < -range || d >= range) continue;
      ++h[static_cast<std::size_t>(std::floor((d + range) / w))];
    }
  return h;
}

double peak_position(const CoincidenceHistogram& h, double lo, double hi) {
  double best = lo;
  std::uint64_t top = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double c = h.bin_center(i);
    if (c >= lo && c < hi && h.counts()[i] > top) {
      top = h.counts()[i];
      best = c;
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("optics") {
  TEST_CASE("ideal time-bin density") {
    for (double v : {0.0, 0.3, 0.7, 1.0})
      for (double phi : {0.0, 0.9, -2.0}) {
        TimebinStateModel m;
        m.visibility = v;
        m.pump_phase_rad = phi;
        const auto rho = ideal_timebin_density(m);
        CHECK(rho.matrix().trace().real() == doctest::Approx(1.0));
        CHECK(std::abs(rho(kEE, kLL) - 0.5 * v * std::polar(1.0, phi)) < 1e-15);
        CHECK(std::abs(concurrence(rho) - v) < 1e-7);  // sqrt of a rank-deficient spectrum
        CHECK(rho(kEL, kEL).real() == 0.0);
      }
    TimebinStateModel bad;
    bad.visibility = 1.2;
    CHECK_THROWS(bad.validate());
  }

  TEST_CASE("analyzer POVM completeness and positivity") {
    for (double r : {0.5, 0.3}) {
      Interferometer a;
      a.split_ratio = r;
      a.phase_rad = 0.7;
      ComplexMatrix sum(2);
      for (auto s : {kSlotEarly, kSlotMiddle, kSlotLate, kSlotLost}) {
        const auto k = analyzer_povm(a, s);
        sum = sum + k;
        for (double e : hermitian_eigensystem(k).values) CHECK(e > -1e-15);
      }
      CHECK(max_abs_diff(sum, ComplexMatrix::identity(2)) < 1e-15);
      const double a2 = r * (1.0 - r);
      CHECK(analyzer_povm(a, kSlotEarly)(0, 0).real() == doctest::Approx(a2));
      CHECK(analyzer_povm(a, kSlotMiddle).trace().real() == doctest::Approx(2.0 * a2));
    }
  }

  TEST_CASE("overlap-slot probability matches the interference fringe") {
    auto rng = CounterRng::from_seed(3);
    for (int t = 0; t < 50; ++t) {
      const double v = rng.uniform(), pp = testing::uniform_in(rng, -3.0, 3.0), px = testing::uniform_in(rng, -3.0, 3.0),
                   pxx = testing::uniform_in(rng, -3.0, 3.0);
      TimebinStateModel m;
      m.visibility = v;
      m.pump_phase_rad = pp;
      Interferometer axx, ax;
      axx.phase_rad = pxx;
      ax.phase_rad = px;
      const auto p = slot_probabilities(ideal_timebin_density(m), axx, ax);
      double total = 0.0;
      for (const auto& row : p)
        for (double x : row) {
          CHECK(x >= -1e-15);
          total += x;
        }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      // Both overlap-slot POVMs carry weight 1/2.
      CHECK(4.0 * p[kSlotMiddle][kSlotMiddle] == doctest::Approx(coincidence_probability(pp, px, pxx, v)).epsilon(1e-12));
      CHECK(p[kSlotEarly][kSlotEarly] == doctest::Approx(0.5 / 16.0));
      CHECK(p[kSlotEarly][kSlotLate] == doctest::Approx(0.0));
    }
    CHECK(coincidence_probability(0, 0, 0, 1.0) == doctest::Approx(0.5));
    CHECK(coincidence_probability(std::numbers::pi, 0, 0, 1.0) == doctest::Approx(0.0));
  }

  TEST_CASE("histogram binning") {
    auto h = CoincidenceHistogram::symmetric(10.0, 100.0);
    CHECK(h.size() == 20);
    CHECK(h.origin() == -100.0);
    CHECK(h.add(-100.0));
    CHECK(h.add(99.9));
    CHECK_FALSE(h.add(100.0));
    CHECK_FALSE(h.add(-100.1));
    CHECK(h.add(0.0, 5));
    CHECK(h.total() == 7);
    CHECK(h.window_sum(-5.0, 10.0) == 5);
    CHECK(h.window_bins(-20.0, 20.0) == 4);
    auto g = CoincidenceHistogram::symmetric(10.0, 100.0);
    g.add(0.0);
    h.merge(g);
    CHECK(h.window_sum(0.0, 10.0) == 6);
    CHECK_THROWS(h.merge(CoincidenceHistogram::symmetric(5.0, 100.0)));
  }

  TEST_CASE("histogram_events matches brute-force pairing") {
    auto rng = CounterRng::from_seed(4);
    std::vector<PhotonEvent> ev;
    for (int i = 0; i < 400; ++i)
      ev.push_back({static_cast<int>(rng.bernoulli(0.5)), static_cast<std::int64_t>(testing::uniform_in(rng, 0.0, 20000.0))});
    std::sort(ev.begin(), ev.end());
    for (auto [a, b] : {std::pair{0, 1}, std::pair{1, 0}, std::pair{0, 0}}) {
      const auto h = histogram_events(ev, a, b, 25.0, 1000.0);
      const auto ref = brute_histogram(ev, a, b, 25.0, 1000.0);
      REQUIRE(h.size() == ref.size());
      for (std::size_t i = 0; i < ref.size(); ++i) CHECK(h.counts()[i] == ref[i]);
    }
  }

  TEST_CASE("dead time drops events within the window per channel") {
    DetectorModel d;
    d.dead_time_ps = 100.0;
    std::vector<std::vector<PhotonEvent>> parts{{{0, 0}, {0, 50}, {1, 60}, {0, 150}}, {{0, 99}, {0, 260}}};
    const std::array<DetectorModel, 2> dets{d, d};
    const auto out = finalize_events(std::move(parts), dets);
    const std::vector<PhotonEvent> expect{{0, 0}, {1, 60}, {0, 150}, {0, 260}};
    CHECK(out == expect);
  }

  TEST_CASE("decay histogram folds onto the period") {
    std::vector<PhotonEvent> ev{{0, 100}, {0, 12500 + 100}, {0, 25000 + 350}, {1, 100}, {0, 12499}};
    const auto h = decay_histogram(ev, 0, 12500.0, 50.0, -500.0, 2000.0);
    CHECK(h.window_sum(100.0, 150.0) == 2);
    CHECK(h.window_sum(350.0, 400.0) == 1);
    CHECK(h.window_sum(-50.0, 0.0) == 1);  // 12499 folds to -1
  }

  TEST_CASE("time-bin run is thread-independent and seed-sensitive") {
    TimebinSetup s;
    const auto a = simulate_timebin_run(s, 200'000, 8, {1});
    const auto b = simulate_timebin_run(s, 200'000, 8, {4});
    CHECK(a == b);
    CHECK(a != simulate_timebin_run(s, 200'000, 9, {1}));
    CHECK(std::is_sorted(a.begin(), a.end()));
    s.x_analyzer.delay_ps = 3100.0;
    CHECK_THROWS(simulate_timebin_run(s, 10, 1));
  }

  TEST_CASE("HOM peaks at 0, +-delay, +-2 delay") {
    HomSetup s;
    s.mutual_visibility = 0.0;
    const auto ev = simulate_hom_run(s, 2'000'000, 12);
    const auto h = histogram_events(ev, 0, 1, 20.0, 8000.0);
    for (double c : {-6000.0, -3000.0, 0.0, 3000.0, 6000.0})
      CHECK(std::abs(peak_position(h, c - 1000.0, c + 1000.0) - c) <= 60.0);
  }

  TEST_CASE("ideal autocorrelation has an empty central peak") {
    AutocorrelationSetup s;
    s.emitter.two_pair_prob = 0.0;
    s.detector_1.dark_count_rate_hz = 0.0;
    s.detector_2.dark_count_rate_hz = 0.0;
    const auto ev = simulate_autocorrelation(s, 2'000'000, 13);
    const auto h = histogram_events(ev, 0, 1, 50.0, 40000.0);
    CHECK(h.window_sum(-3125.0, 3125.0) == 0);
    CHECK(h.window_sum(12500.0 - 3125.0, 12500.0 + 3125.0) > 100);
  }

  TEST_CASE("cascade run orders exciton after biexciton") {
    EmitterParams e;
    DetectorModel d;
    d.efficiency = 1.0;
    d.dark_count_rate_hz = 0.0;
    d.jitter_fwhm_ps = 0.0;
    const auto ev = simulate_cascade_run(e, d, d, 100'000, 3);
    const auto h = histogram_events(ev, kChannelXX, kChannelX, 10.0, 5000.0);
    CHECK(h.window_sum(-5000.0, -10.0) == 0);
    CHECK(h.total() > 30'000);
  }
}
