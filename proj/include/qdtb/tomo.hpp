#pragma once

// Two-qubit time-bin tomography with the 16 product projectors
// {E, L, P, Pi} x {E, L, P, Pi}.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

#include "qdtb/optics.hpp"
#include "qdtb/qcore.hpp"

namespace qdtb {

class CounterRng;

/// E = |e>, L = |l>, P = (|e> + |l>)/sqrt(2), Pi = (|e> + i|l>)/sqrt(2).
enum class Projector : std::uint8_t { kEarly = 0, kLate = 1, kPlus = 2, kPlusI = 3 };

const char* label(Projector p) noexcept;
/// Throws DataError for anything but E, L, P, Pi.
Projector projector_from_label(std::string_view text);
std::array<Complex, 2> projector_vector(Projector p);

struct TomographySetting {
  Projector xx = Projector::kEarly;
  Projector x = Projector::kEarly;

  friend bool operator==(const TomographySetting&, const TomographySetting&) = default;
};

inline constexpr std::size_t kSettingCount = 16;

/// XX-major order: index = 4 * xx + x.
std::array<TomographySetting, kSettingCount> tomography_settings();
std::size_t setting_index(const TomographySetting& s) noexcept;
/// |v_xx v_x><v_xx v_x| (4x4).
ComplexMatrix setting_projector(const TomographySetting& s);
/// Tr(rho P_s).
double expected_probability(const DensityMatrix& rho, const TomographySetting& s);

struct CountsTable {
  std::array<std::uint64_t, kSettingCount> counts{};  // indexed like tomography_settings()
  std::int64_t acquisition_cycles = 0;
  double efficiency_product = 1.0;
  // Counts read from analyzer slots: E/L slots carry weight 1/4 per photon,
  // the overlap slot 1/2.
  bool slot_weighted = false;

  /// Poisson exposure of setting s: cycles * efficiency * slot weights.
  [[nodiscard]] double exposure(std::size_t s) const;
  [[nodiscard]] std::uint64_t total() const noexcept;
  void validate() const;
};

/// Each count ~ Poisson(cycles * efficiency_product * Tr(rho P_s)).
CountsTable simulate_counts(const DensityMatrix& rho, std::int64_t per_setting_cycles, double efficiency_product,
                            std::uint64_t seed);

/// Counts equal to their expectation, rounded to the nearest integer.
CountsTable expected_counts(const DensityMatrix& rho, std::int64_t per_setting_cycles, double efficiency_product);

struct ReconstructionOptions {
  // Flat accidental background subtracted from every setting (clamped at 0).
  std::optional<double> flat_background;
  int max_iterations = 10000;
  double tolerance = 1e-10;
};

/// Dual-basis inversion of the exposure-normalised frequencies. Hermitian,
/// unit trace, possibly not positive.
ComplexMatrix linear_reconstruct(const CountsTable& counts, const ReconstructionOptions& options = {});
/// Same inversion applied to exact probabilities.
ComplexMatrix linear_reconstruct(const std::array<double, kSettingCount>& probabilities);

/// Poisson log-likelihood of rho with the overall count scale at its optimum.
double poisson_log_likelihood(const CountsTable& counts, const DensityMatrix& rho,
                              const ReconstructionOptions& options = {});

struct MleResult {
  DensityMatrix rho = DensityMatrix::maximally_mixed();
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Maximises the Poisson likelihood over rho = T^dagger T / Tr with T lower
/// triangular (4 real diagonal, 6 complex off-diagonal entries).
/// Starts from `init` projected to the positive cone.
MleResult mle_reconstruct(const CountsTable& counts, const ComplexMatrix& init,
                          const ReconstructionOptions& options = {});
/// Starts from the linear estimate.
MleResult mle_reconstruct(const CountsTable& counts, const ReconstructionOptions& options = {});

struct ReconstructionResult {
  DensityMatrix rho = DensityMatrix::maximally_mixed();
  double concurrence = 0.0;
  double fidelity = 0.0;            // to phi+ with zero phase
  double fidelity_max_phase = 0.0;  // maximised over the Bell phase
  double concurrence_err = 0.0;
  double fidelity_err = 0.0;
  double log_likelihood = 0.0;
  bool converged = false;
};

/// Draws one resampled count from an observed count.
using CountResampler = std::function<std::uint64_t(std::uint64_t observed, CounterRng& rng)>;

struct MonteCarloErrors {
  double concurrence_err = 0.0;
  double fidelity_err = 0.0;
};

/// Sample standard deviations over `runs` resampled tables; resampling is
/// Poisson(observed) unless `resampler` is given. Run r uses substream r.
MonteCarloErrors monte_carlo_errors(const CountsTable& counts, int runs, std::uint64_t seed, int threads = 1,
                                    const ReconstructionOptions& options = {}, const CountResampler& resampler = {});

/// MLE reconstruction, metrics and Monte-Carlo error bars.
ReconstructionResult reconstruct(const CountsTable& counts, int mc_runs, std::uint64_t seed, int threads = 1,
                                 const ReconstructionOptions& options = {});

nlohmann::json to_json(const ReconstructionResult& r);

/// Slot-resolved coincidence counting of a time-bin event stream: returns
/// the [xx_slot][x_slot] pair counts (slots E, overlap, L). Windows are
/// +-window_ps around slot * delay plus the mean emission delay of each
/// species; pairs are formed within one excitation cycle.
std::array<std::array<std::uint64_t, 3>, 3> count_slot_pairs(std::span<const PhotonEvent> events,
                                                              const TimebinSetup& setup, double window_ps = 500.0);

/// Runs the 16 settings as separate time-bin acquisitions of
/// `cycles_per_setting` cycles each. P and Pi set the analyzer phase to 0
/// and -pi/2; E and L read the outer slots of the same run. Setting s uses
/// substream s of the seed. The returned table is slot weighted.
CountsTable tomography_experiment(const TimebinSetup& setup, std::int64_t cycles_per_setting, std::uint64_t seed,
                                  const RunOptions& options = {}, double window_ps = 500.0);

/// `xx_proj,x_proj,count` rows with `# acquisition_cycles=`,
/// `# efficiency_product=` and `# slot_weighted=` lines.
std::string counts_csv(const CountsTable& counts);
void write_counts_csv(const std::filesystem::path& path, const CountsTable& counts);
CountsTable parse_counts_csv(std::string_view text, const std::string& source = "<memory>");
CountsTable read_counts_csv(const std::filesystem::path& path);

}  // namespace qdtb
