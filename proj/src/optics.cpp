#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "qdtb/optics.hpp"
#include "qdtb/parallel.hpp"
#include "qdtb/rng.hpp"

namespace qdtb {
namespace {

constexpr std::uint64_t kSlotStream = 0x5107;
constexpr std::uint64_t kDarkStream = 0xda4c;
constexpr std::uint64_t kHomStream = 0x4011;
constexpr std::uint64_t kHbtStream = 0x4b7;
constexpr std::int64_t kBlock = 1 << 16;

std::size_t block_count(std::int64_t n) { return static_cast<std::size_t>((n + kBlock - 1) / kBlock); }

// Dark counts for the whole run, generated per fixed time block.
void add_run_dark_counts(std::vector<std::vector<PhotonEvent>>& parts, std::span<const DetectorModel> detectors,
                         double duration_ps, double block_ps, std::uint64_t seed) {
  bool any = false;
  for (const auto& d : detectors) any |= d.dark_count_rate_hz > 0.0;
  if (!any || duration_ps <= 0.0) return;
  const auto root = CounterRng::from_seed(seed).substream(kDarkStream);
  const auto n_blocks = static_cast<std::size_t>(std::ceil(duration_ps / block_ps));
  for (std::size_t b = 0; b < n_blocks; ++b) {
    auto rng = root.substream(b);
    std::vector<PhotonEvent> part;
    const double t0 = static_cast<double>(b) * block_ps;
    const double t1 = std::min(duration_ps, t0 + block_ps);
    for (std::size_t ch = 0; ch < detectors.size(); ++ch)
      add_dark_counts(part, static_cast<int>(ch), t0, t1, detectors[ch], rng);
    parts.push_back(std::move(part));
  }
}

}  // namespace

void Interferometer::validate() const {
  if (!(delay_ps > 0.0)) throw std::invalid_argument("Interferometer: delay must be positive");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw std::invalid_argument("Interferometer: split ratio must be in (0, 1)");
  if (!std::isfinite(phase_rad)) throw std::invalid_argument("Interferometer: phase must be finite");
}

void TimebinStateModel::validate() const {
  if (!(visibility >= 0.0 && visibility <= 1.0)) throw std::invalid_argument("TimebinStateModel: visibility must be in [0, 1]");
  if (!(pump_delay_ps > 0.0)) throw std::invalid_argument("TimebinStateModel: pump delay must be positive");
}

DensityMatrix ideal_timebin_density(const TimebinStateModel& model) {
  model.validate();
  ComplexMatrix m(4);
  m(kEE, kEE) = 0.5;
  m(kLL, kLL) = 0.5;
  m(kEE, kLL) = 0.5 * model.visibility * std::polar(1.0, model.pump_phase_rad);
  m(kLL, kEE) = std::conj(m(kEE, kLL));
  return DensityMatrix(std::move(m));
}

double coincidence_probability(double phi_p, double phi_x, double phi_xx, double visibility) {
  if (!(visibility >= 0.0 && visibility <= 1.0))
    throw std::invalid_argument("coincidence_probability: visibility must be in [0, 1]");
  return 0.25 * (1.0 + visibility * std::cos(phi_p - phi_x - phi_xx));
}

ComplexMatrix analyzer_povm(const Interferometer& analyzer, Slot slot) {
  const double a2 = analyzer.split_ratio * (1.0 - analyzer.split_ratio);
  ComplexMatrix k(2);
  switch (slot) {
    case kSlotEarly: k(0, 0) = a2; break;
    case kSlotLate: k(1, 1) = a2; break;
    case kSlotMiddle: {
      const Complex u[2] = {1.0 / std::sqrt(2.0), std::polar(1.0 / std::sqrt(2.0), -analyzer.phase_rad)};
      k = outer(u, u) * Complex(2.0 * a2);
      break;
    }
    case kSlotLost:
      k = ComplexMatrix::identity(2) - analyzer_povm(analyzer, kSlotEarly) - analyzer_povm(analyzer, kSlotMiddle) -
          analyzer_povm(analyzer, kSlotLate);
      break;
  }
  return k;
}

std::array<std::array<double, 4>, 4> slot_probabilities(const DensityMatrix& rho, const Interferometer& xx_analyzer,
                                                        const Interferometer& x_analyzer) {
  std::array<std::array<double, 4>, 4> p{};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto kxx = analyzer_povm(xx_analyzer, static_cast<Slot>(i));
    for (std::size_t j = 0; j < 4; ++j) {
      const auto kx = analyzer_povm(x_analyzer, static_cast<Slot>(j));
      p[i][j] = std::max(0.0, trace_of_product(rho.matrix(), kron(kxx, kx)).real());
    }
  }
  return p;
}

std::vector<PhotonEvent> simulate_timebin_run(const TimebinSetup& setup, std::int64_t cycles, std::uint64_t seed,
                                              const RunOptions& options) {
  setup.emitter.validate();
  setup.state.validate();
  setup.xx_analyzer.validate();
  setup.x_analyzer.validate();
  setup.xx_detector.validate();
  setup.x_detector.validate();
  const double pump = setup.state.pump_delay_ps;
  if (std::abs(setup.xx_analyzer.delay_ps - pump) > 1.0 || std::abs(setup.x_analyzer.delay_ps - pump) > 1.0)
    throw std::invalid_argument("simulate_timebin_run: analyzer delays must match the pump delay within 1 ps");
  if (cycles <= 0) return {};

  const auto rho = ideal_timebin_density(setup.state);
  const auto probs = slot_probabilities(rho, setup.xx_analyzer, setup.x_analyzer);
  std::array<double, 16> cumulative{};
  double acc = 0.0;
  for (std::size_t k = 0; k < 16; ++k) cumulative[k] = (acc += probs[k / 4][k % 4]);

  const double xx_offsets[3] = {0.0, setup.xx_analyzer.delay_ps, pump + setup.xx_analyzer.delay_ps};
  const double x_offsets[3] = {0.0, setup.x_analyzer.delay_ps, pump + setup.x_analyzer.delay_ps};
  const double rep = setup.emitter.rep_period_ps;

  const auto records =
      sample_pair_emission(setup.emitter, PulseTrain::single(std::numbers::pi), cycles, seed, {options.threads});
  const std::int64_t n_records = static_cast<std::int64_t>(records.size());
  std::vector<std::vector<PhotonEvent>> parts(block_count(n_records));
  const auto root = CounterRng::from_seed(seed).substream(kSlotStream);
  parallel_for(parts.size(), options.threads, [&](std::size_t b) {
    auto rng = root.substream(b);
    auto& out = parts[b];
    const auto begin = static_cast<std::size_t>(b) * kBlock;
    const auto end = std::min(records.size(), begin + kBlock);
    for (std::size_t i = begin; i < end; ++i) {
      const auto& r = records[i];
      const std::size_t k = rng.categorical(cumulative);
      const std::size_t sxx = k / 4, sx = k % 4;
      const double base = static_cast<double>(r.cycle) * rep;
      if (sxx != kSlotLost) detect_photon(out, kChannelXX, base + r.t_xx_ps + xx_offsets[sxx], setup.xx_detector, rng);
      if (sx != kSlotLost) detect_photon(out, kChannelX, base + r.t_x_ps + x_offsets[sx], setup.x_detector, rng);
    }
  });
  const DetectorModel detectors[2] = {setup.xx_detector, setup.x_detector};
  add_run_dark_counts(parts, detectors, static_cast<double>(cycles) * rep, static_cast<double>(kBlock) * rep, seed);
  return finalize_events(std::move(parts), detectors);
}

std::vector<PhotonEvent> simulate_hom_run(const HomSetup& setup, std::int64_t cycles, std::uint64_t seed,
                                          const RunOptions& options) {
  setup.emitter.validate();
  setup.analyzer.validate();
  setup.detector_1.validate();
  setup.detector_2.validate();
  if (!(setup.mutual_visibility >= 0.0 && setup.mutual_visibility <= 1.0))
    throw std::invalid_argument("simulate_hom_run: mutual visibility must be in [0, 1]");
  const double delay = setup.analyzer.delay_ps;
  const double separation = setup.pulse_separation_ps > 0.0 ? setup.pulse_separation_ps : delay;
  const double mismatch = std::abs(delay - separation);
  if (mismatch > delay / 3.0)
    throw std::invalid_argument("simulate_hom_run: pulse separation must match the analyzer delay");
  if (cycles <= 0) return {};

  const auto& em = setup.emitter;
  const double overlap = setup.mutual_visibility * std::exp(-mismatch / em.tau_xx_ps);
  const double p_short = setup.analyzer.split_ratio;
  const auto telegraph = blinking_telegraph(em.blinking_on_fraction, em.blinking_mean_on_cycles, cycles, seed);
  const DetectorModel detectors[2] = {setup.detector_1, setup.detector_2};
  std::vector<std::vector<PhotonEvent>> parts(block_count(cycles));
  const auto root = CounterRng::from_seed(seed).substream(kHomStream);

  parallel_for(parts.size(), options.threads, [&](std::size_t b) {
    auto rng = root.substream(b);
    auto& out = parts[b];
    const std::int64_t begin = static_cast<std::int64_t>(b) * kBlock;
    const std::int64_t end = std::min(cycles, begin + kBlock);
    auto route = [&](double base, double t, bool long_arm, int channel) {
      detect_photon(out, channel, base + t + (long_arm ? delay : 0.0), detectors[channel], rng);
    };
    auto random_port = [&] { return rng.bernoulli(0.5) ? 0 : 1; };
    for (std::int64_t c = begin; c < end; ++c) {
      if (!telegraph[static_cast<std::size_t>(c)]) continue;
      const double base = static_cast<double>(c) * em.rep_period_ps;
      double t_main[2] = {0.0, 0.0};
      bool has_main[2] = {false, false};
      bool main_long[2] = {false, false};
      for (int k = 0; k < 2; ++k) {
        if (rng.bernoulli(em.p_emit_pi)) {
          has_main[k] = true;
          t_main[k] = k * separation + rng.exponential(em.tau_xx_ps);
          main_long[k] = !rng.bernoulli(p_short);
        }
        if (em.two_pair_prob > 0.0 && rng.bernoulli(em.two_pair_prob)) {
          const double t = k * separation + rng.exponential(em.tau_xx_ps);
          route(base, t, !rng.bernoulli(p_short), random_port());
        }
      }
      const bool meet = has_main[0] && has_main[1] && main_long[0] && !main_long[1];
      if (meet && rng.bernoulli(overlap)) {
        const int port = random_port();
        route(base, t_main[0], true, port);
        route(base, t_main[1], false, port);
        continue;
      }
      for (int k = 0; k < 2; ++k)
        if (has_main[k]) route(base, t_main[k], main_long[k], random_port());
    }
  });
  add_run_dark_counts(parts, detectors, static_cast<double>(cycles) * em.rep_period_ps,
                      static_cast<double>(kBlock) * em.rep_period_ps, seed);
  return finalize_events(std::move(parts), detectors);
}

std::vector<PhotonEvent> simulate_autocorrelation(const AutocorrelationSetup& setup, std::int64_t cycles,
                                                  std::uint64_t seed, const RunOptions& options) {
  setup.detector_1.validate();
  setup.detector_2.validate();
  if (cycles <= 0) return {};
  const auto records =
      sample_pair_emission(setup.emitter, PulseTrain::single(std::numbers::pi), cycles, seed, {options.threads});
  const DetectorModel detectors[2] = {setup.detector_1, setup.detector_2};
  const double rep = setup.emitter.rep_period_ps;
  std::vector<std::vector<PhotonEvent>> parts(block_count(static_cast<std::int64_t>(records.size())));
  const auto root = CounterRng::from_seed(seed).substream(kHbtStream);
  parallel_for(parts.size(), options.threads, [&](std::size_t b) {
    auto rng = root.substream(b);
    const auto begin = b * static_cast<std::size_t>(kBlock);
    const auto end = std::min(records.size(), begin + kBlock);
    for (std::size_t i = begin; i < end; ++i) {
      const auto& r = records[i];
      const double t = static_cast<double>(r.cycle) * rep + (setup.photon == Species::kBiexciton ? r.t_xx_ps : r.t_x_ps);
      const int ch = rng.bernoulli(0.5) ? 0 : 1;
      detect_photon(parts[b], ch, t, detectors[ch], rng);
    }
  });
  add_run_dark_counts(parts, detectors, static_cast<double>(cycles) * rep, static_cast<double>(kBlock) * rep, seed);
  return finalize_events(std::move(parts), detectors);
}

std::vector<PhotonEvent> simulate_cascade_run(const EmitterParams& emitter, const DetectorModel& xx_detector,
                                              const DetectorModel& x_detector, std::int64_t cycles,
                                              std::uint64_t seed, const RunOptions& options) {
  xx_detector.validate();
  x_detector.validate();
  if (cycles <= 0) return {};
  const auto records = sample_pair_emission(emitter, PulseTrain::single(std::numbers::pi), cycles, seed, {options.threads});
  const DetectorModel detectors[2] = {xx_detector, x_detector};
  const double rep = emitter.rep_period_ps;
  std::vector<std::vector<PhotonEvent>> parts(block_count(static_cast<std::int64_t>(records.size())));
  const auto root = CounterRng::from_seed(seed).substream(kHbtStream + 2);
  parallel_for(parts.size(), options.threads, [&](std::size_t b) {
    auto rng = root.substream(b);
    const auto begin = b * static_cast<std::size_t>(kBlock);
    const auto end = std::min(records.size(), begin + kBlock);
    for (std::size_t i = begin; i < end; ++i) {
      const double base = static_cast<double>(records[i].cycle) * rep;
      detect_photon(parts[b], kChannelXX, base + records[i].t_xx_ps, xx_detector, rng);
      detect_photon(parts[b], kChannelX, base + records[i].t_x_ps, x_detector, rng);
    }
  });
  add_run_dark_counts(parts, detectors, static_cast<double>(cycles) * rep, static_cast<double>(kBlock) * rep, seed);
  return finalize_events(std::move(parts), detectors);
}

std::vector<PhotonEvent> simulate_coherent_autocorrelation(double mean_photons, double tau_ps, double rep_period_ps,
                                                           const DetectorModel& detector_1,
                                                           const DetectorModel& detector_2, std::int64_t cycles,
                                                           std::uint64_t seed, const RunOptions& options) {
  if (!(mean_photons > 0.0) || !(tau_ps > 0.0) || !(rep_period_ps > 0.0))
    throw std::invalid_argument("simulate_coherent_autocorrelation: parameters must be positive");
  detector_1.validate();
  detector_2.validate();
  if (cycles <= 0) return {};
  const DetectorModel detectors[2] = {detector_1, detector_2};
  std::vector<std::vector<PhotonEvent>> parts(block_count(cycles));
  const auto root = CounterRng::from_seed(seed).substream(kHbtStream + 1);
  parallel_for(parts.size(), options.threads, [&](std::size_t b) {
    auto rng = root.substream(b);
    const std::int64_t begin = static_cast<std::int64_t>(b) * kBlock;
    const std::int64_t end = std::min(cycles, begin + kBlock);
    for (std::int64_t c = begin; c < end; ++c) {
      const auto n = rng.poisson(mean_photons);
      for (std::uint64_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(c) * rep_period_ps + rng.exponential(tau_ps);
        const int ch = rng.bernoulli(0.5) ? 0 : 1;
        detect_photon(parts[b], ch, t, detectors[ch], rng);
      }
    }
  });
  add_run_dark_counts(parts, detectors, static_cast<double>(cycles) * rep_period_ps,
                      static_cast<double>(kBlock) * rep_period_ps, seed);
  return finalize_events(std::move(parts), detectors);
}

}  // namespace qdtb
