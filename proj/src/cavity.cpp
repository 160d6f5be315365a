#include "qdtb/cavity.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "qdtb/error.hpp"
#include "qdtb/io.hpp"
#include "qdtb/parallel.hpp"

namespace qdtb {
namespace {

constexpr double kPi = std::numbers::pi;

double transmittance(const LayerStack& stack, double wl) { return reflect_transmit(stack, wl).transmittance; }

double mirror_product(const std::pair<LayerStack, LayerStack>& mirrors, double wl) {
  return reflect_transmit(mirrors.first, wl).reflectance * reflect_transmit(mirrors.second, wl).reflectance;
}

// Maximum of f on [a, b], assumed unimodal.
double golden_max(const auto& f, double a, double b) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < 200 && b - a > 1e-9; ++i) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

// Crossing of f = level between x_in (above) and x_out (below).
double bisect_level(const auto& f, double level, double x_in, double x_out) {
  for (int i = 0; i < 200 && std::abs(x_out - x_in) > 1e-10; ++i) {
    const double m = 0.5 * (x_in + x_out);
    (f(m) >= level ? x_in : x_out) = m;
  }
  return 0.5 * (x_in + x_out);
}

}  // namespace

void Layer::validate() const {
  if (!(std::isfinite(index) && index >= 1.0)) throw std::invalid_argument("Layer: refractive index must be >= 1");
  if (!(std::isfinite(thickness_nm) && thickness_nm >= 0.0))
    throw std::invalid_argument("Layer: thickness must be non-negative");
}

void LayerStack::validate() const {
  if (!(ambient_index > 0.0) || !(substrate_index > 0.0))
    throw std::invalid_argument("LayerStack: ambient and substrate indices must be positive");
  for (const auto& l : layers) l.validate();
  if (cavity_layer && *cavity_layer >= layers.size())
    throw std::invalid_argument("LayerStack: cavity layer index out of range");
}

LayerStack cavity_stack(const CavityDesign& d) {
  LayerStack s;
  s.ambient_index = 1.0;
  s.substrate_index = d.n_gaas;
  for (int i = 0; i < d.top_pairs; ++i) {
    s.layers.push_back({d.n_gaas, d.t_gaas_nm});
    s.layers.push_back({d.n_alas, d.t_alas_nm});
  }
  s.cavity_layer = s.layers.size();
  s.layers.push_back({d.n_gaas, d.t_cavity_nm});
  for (int i = 0; i < d.bottom_pairs; ++i) {
    s.layers.push_back({d.n_alas, d.t_alas_nm});
    s.layers.push_back({d.n_gaas, d.t_gaas_nm});
  }
  s.validate();
  return s;
}

LayerStack dbr_stack(const CavityDesign& d, int pairs) {
  LayerStack s;
  s.substrate_index = d.n_gaas;
  for (int i = 0; i < pairs; ++i) {
    s.layers.push_back({d.n_gaas, d.t_gaas_nm});
    s.layers.push_back({d.n_alas, d.t_alas_nm});
  }
  s.validate();
  return s;
}

ComplexMatrix characteristic_matrix(std::span<const Layer> layers, double wavelength_nm) {
  if (!(wavelength_nm > 0.0)) throw std::invalid_argument("characteristic_matrix: wavelength must be positive");
  ComplexMatrix m = ComplexMatrix::identity(2);
  const Complex i(0.0, 1.0);
  for (const auto& l : layers) {
    if (l.thickness_nm == 0.0) continue;
    const double d = 2.0 * kPi * l.index * l.thickness_nm / wavelength_nm;
    const double c = std::cos(d), s = std::sin(d);
    m = m * ComplexMatrix{{c, -i * s / l.index}, {-i * l.index * s, c}};
  }
  return m;
}

SpectrumPoint reflect_transmit(const LayerStack& stack, double wavelength_nm) {
  const auto m = characteristic_matrix(stack.layers, wavelength_nm);
  const double n0 = stack.ambient_index, ns = stack.substrate_index;
  const Complex b = m(0, 0) + m(0, 1) * ns;
  const Complex c = m(1, 0) + m(1, 1) * ns;
  const Complex denom = n0 * b + c;
  SpectrumPoint p;
  p.wavelength_nm = wavelength_nm;
  p.r = (n0 * b - c) / denom;
  p.reflectance = std::norm(p.r);
  p.transmittance = ns / n0 * std::norm(2.0 * n0 / denom);
  return p;
}

std::vector<SpectrumPoint> transfer_matrix_spectrum(const LayerStack& stack, std::span<const double> wavelengths_nm,
                                                    int threads) {
  stack.validate();
  std::vector<SpectrumPoint> out(wavelengths_nm.size());
  parallel_for(out.size(), threads, [&](std::size_t i) { out[i] = reflect_transmit(stack, wavelengths_nm[i]); });
  return out;
}

std::vector<double> wavelength_grid(double lo_nm, double hi_nm, double step_nm) {
  if (!(lo_nm > 0.0) || !(hi_nm > lo_nm) || !(step_nm > 0.0))
    throw std::invalid_argument("wavelength_grid: need 0 < lo < hi and step > 0");
  const auto n = static_cast<std::size_t>(std::floor((hi_nm - lo_nm) / step_nm + 1e-9)) + 1;
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = lo_nm + step_nm * static_cast<double>(i);
  return g;
}

std::pair<LayerStack, LayerStack> cavity_mirrors(const LayerStack& stack) {
  stack.validate();
  if (!stack.cavity_layer) throw std::invalid_argument("cavity_mirrors: stack has no cavity layer");
  const std::size_t c = *stack.cavity_layer;
  const double n = stack.layers[c].index;
  LayerStack top, bottom;
  top.ambient_index = bottom.ambient_index = n;
  top.substrate_index = stack.ambient_index;
  bottom.substrate_index = stack.substrate_index;
  top.layers.assign(stack.layers.rbegin() + static_cast<std::ptrdiff_t>(stack.layers.size() - c), stack.layers.rend());
  bottom.layers.assign(stack.layers.begin() + static_cast<std::ptrdiff_t>(c + 1), stack.layers.end());
  return {top, bottom};
}

Resonance cavity_resonance_and_q(const LayerStack& stack, const ScanRange& range) {
  const auto mirrors = cavity_mirrors(stack);
  const auto grid = wavelength_grid(range.lo_nm, range.hi_nm, range.step_nm);
  std::vector<double> t(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) t[i] = transmittance(stack, grid[i]);
  std::size_t best = 0;
  double best_t = -1.0;
  for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
    if (!(t[i] >= t[i - 1] && t[i] > t[i + 1])) continue;
    if (mirror_product(mirrors, grid[i]) <= 0.5) continue;
    if (t[i] > best_t) {
      best_t = t[i];
      best = i;
    }
  }
  if (best_t < 0.0) throw ConvergenceError("no cavity resonance inside the stop band of the scan range");

  auto f = [&](double wl) { return transmittance(stack, wl); };
  Resonance r;
  r.wavelength_nm = golden_max(f, grid[best - 1], grid[best + 1]);
  r.peak_transmittance = f(r.wavelength_nm);
  const double half = 0.5 * r.peak_transmittance;
  double lo = r.wavelength_nm, hi = r.wavelength_nm;
  while (f(lo) >= half) {
    lo -= range.step_nm;
    if (lo < range.lo_nm) throw ConvergenceError("resonance half maximum lies outside the scan range");
  }
  while (f(hi) >= half) {
    hi += range.step_nm;
    if (hi > range.hi_nm) throw ConvergenceError("resonance half maximum lies outside the scan range");
  }
  r.fwhm_nm = bisect_level(f, half, r.wavelength_nm, hi) - bisect_level(f, half, r.wavelength_nm, lo);
  r.q = r.wavelength_nm / r.fwhm_nm;
  return r;
}

double penetration_depth_nm(const LayerStack& mirror, double wavelength_nm) {
  const double h = 1e-3 * wavelength_nm * 1e-2;
  const Complex rp = reflect_transmit(mirror, wavelength_nm + h).r;
  const Complex rm = reflect_transmit(mirror, wavelength_nm - h).r;
  const double slope = std::arg(rp / rm) / (2.0 * h);
  return wavelength_nm * wavelength_nm / (4.0 * kPi * mirror.ambient_index) * std::abs(slope);
}

double effective_length_nm(const LayerStack& stack, double wavelength_nm) {
  const auto [top, bottom] = cavity_mirrors(stack);
  return stack.layers[*stack.cavity_layer].thickness_nm + penetration_depth_nm(top, wavelength_nm) +
         penetration_depth_nm(bottom, wavelength_nm);
}

void DefectModel::validate() const {
  if (!(height_nm > 0.0) || !(diameter_nm > 0.0)) throw std::invalid_argument("DefectModel: h and D must be positive");
  if (!(waist_override_nm >= 0.0)) throw std::invalid_argument("DefectModel: waist override must be non-negative");
}

double mode_waist_nm(const DefectModel& defect, double wavelength_nm, double n_cavity, double length_nm) {
  defect.validate();
  if (defect.waist_override_nm > 0.0) return defect.waist_override_nm;
  const double cap = defect.diameter_nm / 2.0;
  const double h = defect.height_nm;
  const double rc = (cap * cap + h * h) / (2.0 * h);
  if (!(length_nm > 0.0) || length_nm >= rc) return cap;
  const double w2 = wavelength_nm / (kPi * n_cavity) * std::sqrt(length_nm * (rc - length_nm));
  return std::min(std::sqrt(w2), cap);
}

double purcell_factor(double q, double wavelength_nm, double n_cavity, double waist_nm, double length_nm) {
  if (!(q > 0.0) || !(wavelength_nm > 0.0) || !(n_cavity > 0.0) || !(waist_nm > 0.0) || !(length_nm > 0.0))
    throw std::invalid_argument("purcell_factor: inputs must be positive");
  const double volume = kPi / 4.0 * waist_nm * waist_nm * length_nm;
  return 3.0 / (4.0 * kPi * kPi) * std::pow(wavelength_nm / n_cavity, 3) * q / volume;
}

PurcellEstimate purcell_estimate(const LayerStack& stack, const DefectModel& defect, const ScanRange& range) {
  PurcellEstimate p;
  p.resonance = cavity_resonance_and_q(stack, range);
  const double wl = p.resonance.wavelength_nm;
  p.n_cavity = stack.layers[*stack.cavity_layer].index;
  p.effective_length_nm = effective_length_nm(stack, wl);
  p.waist_nm = mode_waist_nm(defect, wl, p.n_cavity, p.effective_length_nm);
  p.mode_volume_nm3 = kPi / 4.0 * p.waist_nm * p.waist_nm * p.effective_length_nm;
  p.purcell = purcell_factor(p.resonance.q, wl, p.n_cavity, p.waist_nm, p.effective_length_nm);
  return p;
}

std::vector<std::pair<double, double>> purcell_spectrum(const PurcellEstimate& estimate,
                                                        std::span<const double> wavelengths_nm) {
  const double g = 0.5 * estimate.resonance.fwhm_nm;
  std::vector<std::pair<double, double>> out;
  out.reserve(wavelengths_nm.size());
  for (double wl : wavelengths_nm) {
    const double d = wl - estimate.resonance.wavelength_nm;
    out.emplace_back(wl, estimate.purcell * g * g / (d * d + g * g));
  }
  return out;
}

double na_collection_fraction(double waist_nm, double wavelength_nm, double na) {
  if (!(na > 0.0 && na <= 1.0)) throw std::invalid_argument("na_collection_fraction: NA must be in (0, 1]");
  if (!(waist_nm > 0.0) || !(wavelength_nm > 0.0))
    throw std::invalid_argument("na_collection_fraction: waist and wavelength must be positive");
  const double kw = 2.0 * kPi / wavelength_nm * waist_nm;
  // Over theta: exp(-(k w sin)^2 / 2) sin cos^2.
  auto integral = [&](double theta_max) {
    const int n = 4000;
    const double hstep = theta_max / n;
    double s = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double th = i * hstep;
      const double sn = std::sin(th), cs = std::cos(th);
      const double v = std::exp(-0.5 * kw * kw * sn * sn) * sn * cs * cs;
      s += v * (i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0));
    }
    return s * hstep / 3.0;
  };
  return std::min(1.0, integral(std::asin(na)) / integral(kPi / 2.0));
}

double top_emission_fraction(const LayerStack& stack, double wavelength_nm, double purcell) {
  if (!(purcell >= 0.0)) throw std::invalid_argument("top_emission_fraction: Purcell factor must be non-negative");
  const auto [top, bottom] = cavity_mirrors(stack);
  const double t_top = reflect_transmit(top, wavelength_nm).transmittance;
  const double t_bottom = reflect_transmit(bottom, wavelength_nm).transmittance;
  const double beta = purcell / (purcell + 1.0);
  return beta * t_top / (t_top + t_bottom);
}

ExtractionEstimate extraction_efficiency(const LayerStack& stack, const DefectModel& defect, double na,
                                         const ScanRange& range) {
  ExtractionEstimate e;
  e.purcell = purcell_estimate(stack, defect, range);
  const double wl = e.purcell.resonance.wavelength_nm;
  e.top_fraction = top_emission_fraction(stack, wl, e.purcell.purcell);
  e.na_fraction = na_collection_fraction(e.purcell.waist_nm, wl, na);
  e.efficiency = e.top_fraction * e.na_fraction;
  return e;
}

void EfficiencyBudget::validate() const {
  if (!(count_rate_hz >= 0.0) || !(rep_rate_hz > 0.0))
    throw std::invalid_argument("EfficiencyBudget: rates must be positive");
  for (double e : {blinking, p_emit, eta_detector, eta_fiber, eta_setup})
    if (!(e > 0.0 && e <= 1.0)) throw std::invalid_argument("EfficiencyBudget: efficiencies must be in (0, 1]");
}

BudgetLedger efficiency_budget(const EfficiencyBudget& b) {
  b.validate();
  BudgetLedger l;
  l.factors = {{"rep_rate_hz", b.rep_rate_hz}, {"blinking", b.blinking},      {"p_emit", b.p_emit},
               {"eta_detector", b.eta_detector}, {"eta_fiber", b.eta_fiber}, {"eta_setup", b.eta_setup}};
  l.denominator = 1.0;
  for (const auto& [name, v] : l.factors) l.denominator *= v;
  l.count_rate_hz = b.count_rate_hz;
  l.eta_first_lens = b.count_rate_hz / l.denominator;
  return l;
}

nlohmann::json to_json(const BudgetLedger& ledger) {
  nlohmann::json factors = nlohmann::json::array();
  for (const auto& [name, v] : ledger.factors) factors.push_back({{"name", name}, {"value", v}});
  return {{"count_rate_hz", ledger.count_rate_hz},
          {"factors", factors},
          {"denominator", ledger.denominator},
          {"eta_first_lens", ledger.eta_first_lens}};
}

nlohmann::json to_json(const Resonance& r) {
  return {{"wavelength_nm", r.wavelength_nm}, {"fwhm_nm", r.fwhm_nm}, {"q", r.q},
          {"peak_transmittance", r.peak_transmittance}};
}

nlohmann::json to_json(const PurcellEstimate& p) {
  return {{"resonance", to_json(p.resonance)}, {"n_cavity", p.n_cavity},
          {"effective_length_nm", p.effective_length_nm}, {"waist_nm", p.waist_nm},
          {"mode_volume_nm3", p.mode_volume_nm3}, {"purcell", p.purcell}};
}

nlohmann::json to_json(const ExtractionEstimate& e) {
  return {{"purcell", to_json(e.purcell)}, {"top_fraction", e.top_fraction}, {"na_fraction", e.na_fraction},
          {"efficiency", e.efficiency}};
}

std::string stack_csv(const LayerStack& stack) {
  std::ostringstream out;
  out << "# ambient_index=" << format_double(stack.ambient_index) << '\n'
      << "# substrate_index=" << format_double(stack.substrate_index) << '\n';
  if (stack.cavity_layer) out << "# cavity_layer=" << *stack.cavity_layer << '\n';
  out << "index,thickness_nm\n";
  for (const auto& l : stack.layers) out << format_double(l.index) << ',' << format_double(l.thickness_nm) << '\n';
  return out.str();
}

LayerStack parse_stack_csv(std::string_view text, const std::string& source) {
  const auto table = parse_csv(text, {"index", "thickness_nm"}, source);
  LayerStack s;
  s.ambient_index = table.has_meta("ambient_index") ? table.meta_number("ambient_index") : 1.0;
  s.substrate_index = table.has_meta("substrate_index") ? table.meta_number("substrate_index") : 1.0;
  if (table.has_meta("cavity_layer")) s.cavity_layer = static_cast<std::size_t>(table.meta_number("cavity_layer"));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    Layer l{table.number(r, 0), table.number(r, 1)};
    try {
      l.validate();
    } catch (const std::invalid_argument& e) {
      throw DataError(source + ": line " + std::to_string(table.line_numbers[r]) + ": " + e.what());
    }
    s.layers.push_back(l);
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(source + ": " + e.what());
  }
  return s;
}

LayerStack read_stack_csv(const std::filesystem::path& path) { return parse_stack_csv(read_file(path), path.string()); }

std::string spectrum_csv(std::span<const SpectrumPoint> spectrum) {
  std::ostringstream out;
  out << "wavelength_nm,R,T\n";
  for (const auto& p : spectrum)
    out << format_double(p.wavelength_nm) << ',' << format_double(p.reflectance) << ','
        << format_double(p.transmittance) << '\n';
  return out.str();
}

}  // namespace qdtb
