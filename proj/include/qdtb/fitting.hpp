#pragma once

// Physical quantities from coincidence histograms and scans.

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "qdtb/optics.hpp"

namespace qdtb {

struct Estimate {
  double value = 0.0;
  double sigma = 0.0;
};

struct FitResult {
  std::vector<std::pair<std::string, Estimate>> params;  // in model order
  double reduced_chi2 = 0.0;
  bool converged = false;

  /// Throws std::out_of_range for unknown names.
  [[nodiscard]] const Estimate& at(const std::string& name) const;
  void set(const std::string& name, Estimate e);
};

/// {"name": {"value": v, "sigma": s}, ..., "reduced_chi2": x, "converged": b}
nlohmann::json to_json(const FitResult& fit);

struct PeakAnalysis {
  std::vector<double> positions_ps;  // sorted
  std::vector<double> areas;
  double background_per_bin = 0.0;
};

/// Integrates windows of +-half_width around each centre (bin centres inside
/// [c - w, c + w)). Areas are raw sums; background_per_bin is the mean of the
/// gaps between windows and is not subtracted. Throws std::invalid_argument
/// if windows overlap.
PeakAnalysis integrate_peaks(const CoincidenceHistogram& hist, std::vector<double> centers_ps, double half_width_ps);

struct G2Options {
  double window_ps = 0.0;   // <= 0: rep_period / 4
  int far_min_order = 0;    // <= 0: outer half of the side peaks in range
};

struct G2Result {
  double g2 = 0.0;
  double sigma = 0.0;
  double central_area = 0.0;
  double far_mean_area = 0.0;
  int far_peak_count = 0;
  PeakAnalysis peaks;  // central and all side peaks
};

/// Central peak area over the mean area of far side peaks (orders
/// >= far_min_order on both sides). sigma^2 = g2^2 (1/A_0 + 1/sum A_far).
/// Throws DataError when the histogram holds no side peaks or fewer than
/// five periods on either side.
G2Result g2_zero(const CoincidenceHistogram& hist, double rep_period_ps, const G2Options& options = {});

struct BlinkingResult {
  Estimate on_fraction;
  double correlation_cycles = 0.0;  // 1/(1 - lambda)
  bool fitted = false;              // false: direct far/near ratio used
};

/// Fits side-peak areas A(k) = A_inf (1 + c lambda^k), k >= 1, with both
/// signs of k summed, and returns 1/(1 + c), the asymptotic far/near ratio.
BlinkingResult blinking_factor(const CoincidenceHistogram& hist, double rep_period_ps, const G2Options& options = {});

struct HomPeaks {
  double a = 0.0;
  double b_minus = 0.0, b_plus = 0.0;
  double c_minus = 0.0, c_plus = 0.0;
  double uncorrelated = 0.0;  // twice the distinguishable A
  bool c_peaks_used = true;
  Estimate g2_hom;
  Estimate visibility;
};

/// Five windows of +-window at 0, +-delay, +-2 delay (window <= 0 means
/// delay / 3). For distinguishable photons the areas A : B : C follow
/// 2 : 2 : 1 per side and g2_hom = A / U = 1/2, with
/// U = (2/3)(B- + B+ + C- + C+). When rep_period_ps > 0 and the next
/// cluster's peak at rep - 2 delay reaches a C window, U = B- + B+.
/// visibility = 1 - 2 g2_hom.
HomPeaks hom_five_peak(const CoincidenceHistogram& hist, double delay_ps, double window_ps = 0.0,
                       double rep_period_ps = 0.0);

struct ScanPoint {
  double x = 0.0;
  double y = 0.0;
  double sigma = 0.0;  // <= 0 on every point: unit weights, covariance scaled by chi2/dof
};

/// rate(d) = R0 (1 - V exp(-|d| / tau_c)). Parameters "R0", "V", "tau_c".
/// Throws DataError for fewer than 7 points.
FitResult hom_delay_scan(std::span<const ScanPoint> scan);

/// rate(x) = A sin^2(k x / 2). Parameters "A", "k", "x_pi" = pi/k and
/// "p_emit_pi" = A / rate_norm.
FitResult fit_rabi(std::span<const ScanPoint> scan, double rate_norm);

struct LifetimeFit {
  Estimate tau;
  Estimate t0;
  Estimate tail_tau;  // least squares on bins from peak + jitter FWHM on
  bool consistent = false;  // |tau - tail_tau| <= 2 tail sigma
  bool sufficient_counts = false;  // >= 10^4 counts
  bool converged = false;
};

/// Binned Poisson maximum likelihood of an exponential decay starting at t0
/// convolved with a Gaussian response of the given sigma, normalised over
/// the histogram range.
LifetimeFit fit_lifetime(const CoincidenceHistogram& hist, double jitter_sigma_ps);

/// Maximum-likelihood decay time of unbinned delays from a known origin
/// with no response: the sample mean, sigma = mean / sqrt(n).
Estimate fit_lifetime_samples(std::span<const double> delays_ps);

/// tau_bulk / tau_meas.
double purcell_from_lifetimes(double tau_meas_ps, double tau_bulk_ps);

nlohmann::json to_json(const G2Result& r);
nlohmann::json to_json(const BlinkingResult& r);
nlohmann::json to_json(const HomPeaks& r);
nlohmann::json to_json(const LifetimeFit& r);

/// `x,y[,sigma]` scan files.
std::vector<ScanPoint> parse_scan_csv(std::string_view text, const std::string& source = "<memory>");
std::vector<ScanPoint> read_scan_csv(const std::filesystem::path& path);
std::string scan_csv(std::span<const ScanPoint> scan, const std::string& x_name, const std::string& y_name);

}  // namespace qdtb
