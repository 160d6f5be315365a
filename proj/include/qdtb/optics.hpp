#pragma once

// Interferometers, detectors and coincidence logic at the photon-event level.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "qdtb/cascade.hpp"
#include "qdtb/qcore.hpp"

namespace qdtb {

class CounterRng;

struct Interferometer {
  double delay_ps = 3000.0;
  double phase_rad = 0.0;
  double split_ratio = 0.5;

  void validate() const;
};

struct DetectorModel {
  double efficiency = 0.25;
  double dark_count_rate_hz = 100.0;
  double jitter_fwhm_ps = 16.0;
  double dead_time_ps = 0.0;

  [[nodiscard]] double jitter_sigma_ps() const noexcept { return jitter_fwhm_ps / 2.355; }
  void validate() const;
};

struct PhotonEvent {
  int channel = 0;
  std::int64_t timestamp_ps = 0;

  friend bool operator==(const PhotonEvent&, const PhotonEvent&) = default;
  friend auto operator<=>(const PhotonEvent& a, const PhotonEvent& b) {
    if (auto c = a.timestamp_ps <=> b.timestamp_ps; c != 0) return c;
    return a.channel <=> b.channel;
  }
};

/// Start-stop delay histogram. Bin i covers [origin + i w, origin + (i+1) w).
class CoincidenceHistogram {
 public:
  CoincidenceHistogram(double bin_width_ps, double origin_ps, std::size_t bins);
  /// Bins covering [-range, range).
  static CoincidenceHistogram symmetric(double bin_width_ps, double range_ps);

  [[nodiscard]] double bin_width() const noexcept { return bin_width_; }
  [[nodiscard]] double origin() const noexcept { return origin_; }
  [[nodiscard]] std::size_t size() const noexcept { return counts_.size(); }
  [[nodiscard]] std::span<const std::uint64_t> counts() const noexcept { return counts_; }
  [[nodiscard]] double bin_left(std::size_t i) const noexcept { return origin_ + bin_width_ * static_cast<double>(i); }
  [[nodiscard]] double bin_center(std::size_t i) const noexcept { return bin_left(i) + 0.5 * bin_width_; }
  [[nodiscard]] double range_end() const noexcept { return bin_left(counts_.size()); }
  [[nodiscard]] std::uint64_t total() const noexcept;

  /// Returns false when the delay falls outside the histogram.
  bool add(double delay_ps, std::uint64_t n = 1);
  void set(std::size_t bin, std::uint64_t n) { counts_.at(bin) = n; }
  /// Sum of bins whose centres lie in [lo, hi).
  [[nodiscard]] std::uint64_t window_sum(double lo, double hi) const;
  [[nodiscard]] std::size_t window_bins(double lo, double hi) const;

  /// Adds another histogram with identical binning.
  void merge(const CoincidenceHistogram& other);

 private:
  double bin_width_;
  double origin_;
  std::vector<std::uint64_t> counts_;
};

struct TimebinStateModel {
  double visibility = 0.70;
  double pump_phase_rad = 0.0;
  double pump_delay_ps = 3000.0;

  void validate() const;
};

/// rho = (|ee><ee| + |ll><ll|)/2 + (V/2)(e^{i phi_P} |ee><ll| + h.c.)
DensityMatrix ideal_timebin_density(const TimebinStateModel& model);

/// Probability that both photons of a detected pair land in the overlap slot,
/// (1 + V cos(phi_P - phi_X - phi_XX)) / 4.
double coincidence_probability(double phi_p, double phi_x, double phi_xx, double visibility);

/// Arrival slots behind an unbalanced Michelson analyzer: early-short,
/// overlap (early-long or late-short), late-long, or returned toward the
/// source. An analyzer with phase phi projects the overlap slot onto
/// (|e> + e^{-i phi} |l>)/sqrt(2); each path reaches the detection port with
/// amplitude sqrt(r (1 - r)) for split ratio r.
enum Slot : std::size_t { kSlotEarly = 0, kSlotMiddle = 1, kSlotLate = 2, kSlotLost = 3 };

/// Single-photon POVM element of `slot` for the given analyzer (2x2).
ComplexMatrix analyzer_povm(const Interferometer& analyzer, Slot slot);

/// Joint outcome probabilities [xx_slot][x_slot] for a two-photon state.
std::array<std::array<double, 4>, 4> slot_probabilities(const DensityMatrix& rho, const Interferometer& xx_analyzer,
                                                        const Interferometer& x_analyzer);

inline constexpr int kChannelXX = 0;
inline constexpr int kChannelX = 1;

struct RunOptions {
  int threads = 1;
};

struct TimebinSetup {
  EmitterParams emitter;
  TimebinStateModel state;
  Interferometer xx_analyzer;
  Interferometer x_analyzer;
  DetectorModel xx_detector;
  DetectorModel x_detector;
};

/// Event stream of a time-bin run: biexciton photons on channel 0, exciton
/// photons on channel 1. Pair generation follows the cascade sampler with a
/// pi-area pulse; the early/late superposition and its coherence are carried
/// by ideal_timebin_density(state), from which the joint arrival slots are
/// drawn. Rejects analyzers whose delay differs from the pump delay by more
/// than 1 ps.
std::vector<PhotonEvent> simulate_timebin_run(const TimebinSetup& setup, std::int64_t cycles, std::uint64_t seed,
                                              const RunOptions& options = {});

struct HomSetup {
  EmitterParams emitter;
  Interferometer analyzer;
  double mutual_visibility = 0.482;
  DetectorModel detector_1;
  DetectorModel detector_2;
  // Separation of the two excitation pulses; <= 0 means equal to the analyzer delay.
  double pulse_separation_ps = 0.0;
};

/// Two consecutive excitations per cycle enter an unbalanced interferometer
/// whose outputs feed two detectors (channels 0 and 1). When the first photon
/// takes the long arm and the second the short arm they meet at the output
/// beamsplitter and bunch with probability
/// mutual_visibility * exp(-|delay - separation| / tau_xx).
std::vector<PhotonEvent> simulate_hom_run(const HomSetup& setup, std::int64_t cycles, std::uint64_t seed,
                                          const RunOptions& options = {});

enum class Species { kBiexciton, kExciton };

struct AutocorrelationSetup {
  EmitterParams emitter;
  Species photon = Species::kBiexciton;
  DetectorModel detector_1;
  DetectorModel detector_2;
};

/// Hanbury Brown-Twiss: one photon species split 50/50 onto channels 0 and 1.
std::vector<PhotonEvent> simulate_autocorrelation(const AutocorrelationSetup& setup, std::int64_t cycles,
                                                  std::uint64_t seed, const RunOptions& options = {});

/// Same arrangement fed by attenuated laser pulses: Poisson photon number
/// with the given mean per pulse, emission spread Exp(tau_ps).
std::vector<PhotonEvent> simulate_coherent_autocorrelation(double mean_photons, double tau_ps, double rep_period_ps,
                                                           const DetectorModel& detector_1,
                                                           const DetectorModel& detector_2, std::int64_t cycles,
                                                           std::uint64_t seed, const RunOptions& options = {});

/// Direct detection of both cascade photons without interferometers:
/// biexciton on channel 0, exciton on channel 1, pi-area excitation.
std::vector<PhotonEvent> simulate_cascade_run(const EmitterParams& emitter, const DetectorModel& xx_detector,
                                              const DetectorModel& x_detector, std::int64_t cycles,
                                              std::uint64_t seed, const RunOptions& options = {});

/// Applies efficiency and Gaussian jitter to one photon arrival.
void detect_photon(std::vector<PhotonEvent>& out, int channel, double arrival_ps, const DetectorModel& detector,
                   CounterRng& rng);
/// Homogeneous Poisson dark counts on [t0, t1).
void add_dark_counts(std::vector<PhotonEvent>& out, int channel, double t0_ps, double t1_ps,
                     const DetectorModel& detector, CounterRng& rng);
/// Concatenates per-block events, sorts them and applies non-paralyzable
/// dead time per channel (detectors[channel]).
std::vector<PhotonEvent> finalize_events(std::vector<std::vector<PhotonEvent>>&& parts,
                                         std::span<const DetectorModel> detectors);

/// Start-stop histogram over delays in [-range, range). When start and stop
/// channels coincide, an event is never paired with itself.
CoincidenceHistogram histogram_events(std::span<const PhotonEvent> events, int start_channel, int stop_channel,
                                      double bin_width_ps, double range_ps);

/// Histogram of arrival times on `channel` folded onto one excitation period
/// and referenced to the pulse, covering [lo, hi).
CoincidenceHistogram decay_histogram(std::span<const PhotonEvent> events, int channel, double rep_period_ps,
                                     double bin_width_ps, double lo_ps, double hi_ps);

void write_events_csv(const std::filesystem::path& path, std::span<const PhotonEvent> events);
std::vector<PhotonEvent> read_events_csv(const std::filesystem::path& path);

/// `delay_ps,counts` rows (bin left edges) under a `# bin_width_ps=<w>` line.
/// Extra `# key=value` lines may be supplied.
std::string histogram_csv(const CoincidenceHistogram& hist,
                          const std::vector<std::pair<std::string, std::string>>& extra_meta = {});
void write_histogram_csv(const std::filesystem::path& path, const CoincidenceHistogram& hist,
                         const std::vector<std::pair<std::string, std::string>>& extra_meta = {});
CoincidenceHistogram parse_histogram_csv(std::string_view text, const std::string& source = "<memory>");
CoincidenceHistogram read_histogram_csv(const std::filesystem::path& path);

}  // namespace qdtb
