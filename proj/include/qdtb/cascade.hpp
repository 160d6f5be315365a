#pragma once

// Biexciton-exciton cascade under pulsed two-photon resonant excitation.
// Times are in picoseconds, relative to the start of the excitation cycle.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace qdtb {

struct EmitterParams {
  double tau_xx_ps = 300.0;
  double tau_x_ps = 468.0;
  double blinking_on_fraction = 0.625;
  double blinking_mean_on_cycles = 50.0;
  double p_emit_pi = 0.65;
  double two_pair_prob = 0.0;
  double rep_period_ps = 12500.0;  // 80 MHz

  void validate() const;
};

struct PulseTrain {
  std::vector<double> times_ps;
  std::vector<double> areas_rad;
  std::vector<double> phases_rad;

  /// One pi pulse at t = 0.
  static PulseTrain single(double area_rad);
  /// Early/late pair separated by `delay_ps`; the late pulse carries `phase_rad`.
  static PulseTrain pair(double delay_ps, double area_rad, double phase_rad);

  void validate() const;
  [[nodiscard]] bool empty() const noexcept { return times_ps.empty(); }
};

enum class TimeBin : std::uint8_t { kNone = 0, kEarly = 1, kLate = 2 };

const char* to_string(TimeBin bin) noexcept;

struct EmissionRecord {
  std::int64_t cycle = 0;
  double t_xx_ps = 0.0;
  double t_x_ps = 0.0;
  TimeBin excited_by = TimeBin::kNone;
  double phase_rad = 0.0;

  friend bool operator==(const EmissionRecord&, const EmissionRecord&) = default;
};

/// damping * sin^2(area / 2).
double two_photon_rabi_population(double area_rad, double damping);

/// Two-state Markov chain, one entry per cycle (1 = ON). Dwell times are
/// geometric: the ON state is left with probability 1/mean_on_cycles per cycle
/// and the OFF rate is set so that the stationary ON probability equals
/// on_fraction. The first cycle is drawn from the stationary distribution.
std::vector<std::uint8_t> blinking_telegraph(double on_fraction, double mean_on_cycles, std::int64_t cycles,
                                             std::uint64_t seed);

/// P(ON at t+k | ON at t) for the chain above.
double telegraph_on_persistence(double on_fraction, double mean_on_cycles, std::int64_t lag);

struct SamplingOptions {
  int threads = 1;
  std::int64_t block_cycles = 1 << 16;
};

/// Draws emission records for `cycles` excitation cycles. Cycles are split
/// into fixed blocks, each with its own substream, so the output is
/// independent of the thread count.
///
/// Each pulse of the train is tried in order while the telegraph is ON; the
/// first pulse that excites (probability two_photon_rabi_population(area,
/// p_emit_pi)) produces the record. With probability two_pair_prob an ON
/// cycle carries an extra, uncorrelated pair from a uniformly chosen pulse.
std::vector<EmissionRecord> sample_pair_emission(const EmitterParams& params, const PulseTrain& train,
                                                 std::int64_t cycles, std::uint64_t seed,
                                                 const SamplingOptions& options = {});

/// Extra-pair probability that yields a given central autocorrelation peak
/// g2(0) = 2 p q / (f (p + q)^2) for emission probability p and ON fraction f.
double two_pair_prob_for_g2(double g2, double p_emit, double on_fraction);

void write_emission_csv(const std::filesystem::path& path, std::span<const EmissionRecord> records);

}  // namespace qdtb
