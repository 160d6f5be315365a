#pragma once

// Planar DBR micro-cavity at normal incidence: characteristic-matrix
// spectra, resonance and Q, a Gaussian lateral-mode Purcell and extraction
// estimate, and the photon-budget ledger. Lengths in nm.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "qdtb/qcore.hpp"

namespace qdtb {

struct Layer {
  double index = 1.0;
  double thickness_nm = 0.0;  // 0: layer is ignored

  void validate() const;
};

struct LayerStack {
  std::vector<Layer> layers;  // top (ambient side) to bottom
  double ambient_index = 1.0;
  double substrate_index = 3.48;
  std::optional<std::size_t> cavity_layer;

  void validate() const;
};

struct CavityDesign {
  double n_gaas = 3.48;
  double n_alas = 2.95;
  double t_gaas_nm = 68.0;
  double t_alas_nm = 82.0;
  double t_cavity_nm = 270.0;
  int top_pairs = 5;
  int bottom_pairs = 24;
};

/// Air, [GaAs, AlAs] x top, GaAs spacer, [AlAs, GaAs] x bottom, GaAs substrate.
LayerStack cavity_stack(const CavityDesign& design = {});
/// [GaAs, AlAs] x pairs on a GaAs substrate, entered from air.
LayerStack dbr_stack(const CavityDesign& design, int pairs);

/// Product of per-layer characteristic matrices
/// [[cos d, -i sin d / n], [-i n sin d, cos d]], d = 2 pi n t / lambda.
ComplexMatrix characteristic_matrix(std::span<const Layer> layers, double wavelength_nm);

struct SpectrumPoint {
  double wavelength_nm = 0.0;
  double reflectance = 0.0;
  double transmittance = 0.0;
  Complex r;  // amplitude reflection coefficient
};

SpectrumPoint reflect_transmit(const LayerStack& stack, double wavelength_nm);
std::vector<SpectrumPoint> transfer_matrix_spectrum(const LayerStack& stack, std::span<const double> wavelengths_nm,
                                                    int threads = 1);
/// Evenly spaced grid including both ends.
std::vector<double> wavelength_grid(double lo_nm, double hi_nm, double step_nm);

/// Mirrors seen from inside the cavity layer: (top, bottom).
std::pair<LayerStack, LayerStack> cavity_mirrors(const LayerStack& stack);

struct ScanRange {
  double lo_nm = 850.0;
  double hi_nm = 1050.0;
  double step_nm = 0.05;
};

struct Resonance {
  double wavelength_nm = 0.0;
  double fwhm_nm = 0.0;
  double q = 0.0;
  double peak_transmittance = 0.0;
};

/// Transmission maximum inside the stop band (where the product of the two
/// mirror reflectances seen from the spacer exceeds 0.5), refined by golden
/// section; FWHM from bisection of the half-maximum crossings. Throws
/// ConvergenceError when no resonance lies in the scan range.
Resonance cavity_resonance_and_q(const LayerStack& stack, const ScanRange& range = {});

/// lambda^2 / (4 pi n) |d phi / d lambda| of the mirror reflection phase.
double penetration_depth_nm(const LayerStack& mirror, double wavelength_nm);
/// Spacer thickness plus both mirror penetration depths.
double effective_length_nm(const LayerStack& stack, double wavelength_nm);

struct DefectModel {
  double height_nm = 20.0;
  double diameter_nm = 2000.0;
  double waist_override_nm = 0.0;  // > 0 replaces the curvature proxy

  void validate() const;
};

/// Half-symmetric resonator whose curved mirror is the spherical cap of the
/// defect, R_c = (D^2/4 + h^2) / (2 h):
/// w^2 = (lambda / (pi n)) sqrt(L (R_c - L)), capped at D/2.
double mode_waist_nm(const DefectModel& defect, double wavelength_nm, double n_cavity, double length_nm);

/// (3 / (4 pi^2)) (lambda / n)^3 Q / V with V = (pi/4) w^2 L_eff.
double purcell_factor(double q, double wavelength_nm, double n_cavity, double waist_nm, double length_nm);

struct PurcellEstimate {
  Resonance resonance;
  double n_cavity = 0.0;
  double effective_length_nm = 0.0;
  double waist_nm = 0.0;
  double mode_volume_nm3 = 0.0;
  double purcell = 0.0;
};

PurcellEstimate purcell_estimate(const LayerStack& stack, const DefectModel& defect, const ScanRange& range = {});

/// F_p times the Lorentzian line of the resonance.
std::vector<std::pair<double, double>> purcell_spectrum(const PurcellEstimate& estimate,
                                                        std::span<const double> wavelengths_nm);

/// Fraction of the far field of a Gaussian of waist w leaving into air that
/// falls inside the collection cone, from the angular spectrum with the
/// cos(theta) flux factor.
double na_collection_fraction(double waist_nm, double wavelength_nm, double na);

/// beta T_top / (T_top + T_bottom) with beta = F / (F + 1).
double top_emission_fraction(const LayerStack& stack, double wavelength_nm, double purcell);

struct ExtractionEstimate {
  PurcellEstimate purcell;
  double top_fraction = 0.0;
  double na_fraction = 0.0;
  double efficiency = 0.0;
};

ExtractionEstimate extraction_efficiency(const LayerStack& stack, const DefectModel& defect, double na,
                                         const ScanRange& range = {});

struct EfficiencyBudget {
  double count_rate_hz = 0.0;
  double rep_rate_hz = 80e6;
  double blinking = 0.625;
  double p_emit = 0.65;
  double eta_detector = 0.25;
  double eta_fiber = 0.4;
  double eta_setup = 0.12;

  void validate() const;
};

struct BudgetLedger {
  std::vector<std::pair<std::string, double>> factors;  // every denominator term
  double denominator = 0.0;
  double count_rate_hz = 0.0;
  double eta_first_lens = 0.0;
};

/// count_rate / (rep_rate blinking p_emit eta_detector eta_fiber eta_setup).
BudgetLedger efficiency_budget(const EfficiencyBudget& b);

nlohmann::json to_json(const BudgetLedger& ledger);
nlohmann::json to_json(const Resonance& r);
nlohmann::json to_json(const PurcellEstimate& p);
nlohmann::json to_json(const ExtractionEstimate& e);

/// `index,thickness_nm` rows with `# ambient_index=`, `# substrate_index=`
/// and optional `# cavity_layer=` (0-based row) lines.
std::string stack_csv(const LayerStack& stack);
LayerStack parse_stack_csv(std::string_view text, const std::string& source = "<memory>");
LayerStack read_stack_csv(const std::filesystem::path& path);
std::string spectrum_csv(std::span<const SpectrumPoint> spectrum);

}  // namespace qdtb
