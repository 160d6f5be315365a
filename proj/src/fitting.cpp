#include "qdtb/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "qdtb/error.hpp"
#include "qdtb/io.hpp"
#include "qdtb/optimize.hpp"

namespace qdtb {
namespace {

struct PeakLayout {
  double window = 0.0;
  int orders = 0;  // side peaks available on both sides
};

PeakLayout peak_layout(const CoincidenceHistogram& hist, double rep, const G2Options& options) {
  if (!(rep > 0.0)) throw std::invalid_argument("repetition period must be positive");
  PeakLayout l;
  l.window = options.window_ps > 0.0 ? options.window_ps : rep / 4.0;
  if (l.window > rep / 2.0) throw std::invalid_argument("peak window exceeds half the repetition period");
  const int pos = static_cast<int>(std::floor((hist.range_end() - l.window) / rep + 1e-9));
  const int neg = static_cast<int>(std::floor((-hist.origin() - l.window) / rep + 1e-9));
  l.orders = std::min(pos, neg);
  if (l.orders < 1) throw DataError("histogram holds no side peaks");
  if (l.orders < 5) throw DataError("histogram must span at least 5 repetition periods on each side");
  return l;
}

double area(const CoincidenceHistogram& hist, double center, double w) {
  return static_cast<double>(hist.window_sum(center - w, center + w));
}

Estimate param_estimate(const LeastSquaresResult& r, std::size_t i, double cov_scale) {
  return {r.params[i], std::sqrt(std::max(0.0, r.covariance(i, i) * cov_scale))};
}

bool unit_weights(std::span<const ScanPoint> scan) {
  return std::all_of(scan.begin(), scan.end(), [](const ScanPoint& p) { return !(p.sigma > 0.0); });
}

}  // namespace

const Estimate& FitResult::at(const std::string& name) const {
  for (const auto& [n, e] : params)
    if (n == name) return e;
  throw std::out_of_range("FitResult: no parameter " + name);
}

void FitResult::set(const std::string& name, Estimate e) {
  for (auto& [n, v] : params)
    if (n == name) {
      v = e;
      return;
    }
  params.emplace_back(name, e);
}

nlohmann::json to_json(const FitResult& fit) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [n, e] : fit.params) j[n] = {{"value", e.value}, {"sigma", e.sigma}};
  j["reduced_chi2"] = fit.reduced_chi2;
  j["converged"] = fit.converged;
  return j;
}

PeakAnalysis integrate_peaks(const CoincidenceHistogram& hist, std::vector<double> centers_ps, double half_width_ps) {
  if (!(half_width_ps > 0.0)) throw std::invalid_argument("integrate_peaks: window must be positive");
  std::sort(centers_ps.begin(), centers_ps.end());
  for (std::size_t i = 1; i < centers_ps.size(); ++i)
    if (centers_ps[i] - centers_ps[i - 1] < 2.0 * half_width_ps)
      throw std::invalid_argument("integrate_peaks: peak windows overlap");
  PeakAnalysis out;
  out.positions_ps = centers_ps;
  double gap_counts = 0.0;
  std::size_t gap_bins = 0;
  for (std::size_t i = 0; i < centers_ps.size(); ++i) {
    out.areas.push_back(area(hist, centers_ps[i], half_width_ps));
    if (i + 1 < centers_ps.size()) {
      const double lo = centers_ps[i] + half_width_ps, hi = centers_ps[i + 1] - half_width_ps;
      gap_counts += static_cast<double>(hist.window_sum(lo, hi));
      gap_bins += hist.window_bins(lo, hi);
    }
  }
  out.background_per_bin = gap_bins > 0 ? gap_counts / static_cast<double>(gap_bins) : 0.0;
  return out;
}

G2Result g2_zero(const CoincidenceHistogram& hist, double rep_period_ps, const G2Options& options) {
  const auto layout = peak_layout(hist, rep_period_ps, options);
  const int far_min = options.far_min_order > 0 ? options.far_min_order : layout.orders / 2 + 1;
  if (far_min > layout.orders) throw DataError("no far side peaks within the histogram range");
  std::vector<double> centers;
  for (int k = -layout.orders; k <= layout.orders; ++k) centers.push_back(k * rep_period_ps);
  G2Result r;
  r.peaks = integrate_peaks(hist, centers, layout.window);
  double far_sum = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const int k = static_cast<int>(i) - layout.orders;
    if (k == 0) r.central_area = r.peaks.areas[i];
    if (std::abs(k) >= far_min) {
      far_sum += r.peaks.areas[i];
      ++r.far_peak_count;
    }
  }
  r.far_mean_area = far_sum / r.far_peak_count;
  if (!(r.far_mean_area > 0.0)) throw DataError("far side peaks are empty");
  r.g2 = r.central_area / r.far_mean_area;
  // A zero central peak is still bounded by one count.
  r.sigma = std::sqrt(std::max(r.central_area, 1.0) / (r.far_mean_area * r.far_mean_area) + r.g2 * r.g2 / far_sum);
  return r;
}

BlinkingResult blinking_factor(const CoincidenceHistogram& hist, double rep_period_ps, const G2Options& options) {
  const auto layout = peak_layout(hist, rep_period_ps, options);
  const int n = layout.orders;
  std::vector<double> a(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k)
    a[static_cast<std::size_t>(k - 1)] =
        area(hist, k * rep_period_ps, layout.window) + area(hist, -k * rep_period_ps, layout.window);
  double far = 0.0;
  int far_count = 0;
  for (int k = n / 2 + 1; k <= n; ++k, ++far_count) far += a[static_cast<std::size_t>(k - 1)];
  far /= far_count;
  if (!(far > 0.0) || !(a[0] > 0.0)) throw DataError("side peaks are empty");

  BlinkingResult out;
  const double direct = far / a[0];
  out.on_fraction = {direct, direct * std::sqrt(1.0 / a[0] + 1.0 / (far * far_count))};

  // p = (A_inf, c, log m) with lambda = exp(-1/m).
  const double c0 = std::max(a[0] / far - 1.0, 1e-3);
  int k_half = 1;
  while (k_half < n && a[static_cast<std::size_t>(k_half)] - far > 0.5 * (a[0] - far)) ++k_half;
  const double m0 = std::max(1.0, k_half / std::log(2.0));
  auto model = [](std::span<const double> p, int k) {
    return p[0] * (1.0 + p[1] * std::exp(-k / std::exp(p[2])));
  };
  auto residuals = [&](std::span<const double> p, std::span<double> r) {
    for (int k = 1; k <= n; ++k) {
      const double y = a[static_cast<std::size_t>(k - 1)];
      r[static_cast<std::size_t>(k - 1)] = (y - model(p, k)) / std::sqrt(std::max(y, 1.0));
    }
  };
  const auto fit = levenberg_marquardt(residuals, static_cast<std::size_t>(n), {far, c0, std::log(m0)});
  const double c = fit.params[1];
  const double m = std::exp(fit.params[2]);
  if (fit.converged && std::isfinite(c) && c > -0.5 && std::isfinite(m) && m < n) {
    const double sc = std::sqrt(std::max(0.0, fit.covariance(1, 1)));
    out.on_fraction = {1.0 / (1.0 + c), sc / ((1.0 + c) * (1.0 + c))};
    out.correlation_cycles = 1.0 / (1.0 - std::exp(-1.0 / m));
    out.fitted = true;
  }
  return out;
}

HomPeaks hom_five_peak(const CoincidenceHistogram& hist, double delay_ps, double window_ps,
                       double rep_period_ps) {
  if (!(delay_ps > 0.0)) throw std::invalid_argument("hom_five_peak: delay must be positive");
  const double w = window_ps > 0.0 ? window_ps : delay_ps / 3.0;
  if (w > delay_ps / 2.0) throw std::invalid_argument("hom_five_peak: peak windows overlap");
  if (hist.origin() > -2.0 * delay_ps - w || hist.range_end() < 2.0 * delay_ps + w)
    throw DataError("hom_five_peak: histogram does not cover +-2 delay");
  const auto peaks = integrate_peaks(hist, {-2 * delay_ps, -delay_ps, 0.0, delay_ps, 2 * delay_ps}, w);
  HomPeaks h;
  h.c_minus = peaks.areas[0];
  h.b_minus = peaks.areas[1];
  h.a = peaks.areas[2];
  h.b_plus = peaks.areas[3];
  h.c_plus = peaks.areas[4];
  h.c_peaks_used = !(rep_period_ps > 0.0) || rep_period_ps - 2.0 * delay_ps - w > 2.0 * delay_ps + w;
  const double side = h.c_peaks_used ? h.b_minus + h.b_plus + h.c_minus + h.c_plus : h.b_minus + h.b_plus;
  if (!(side > 0.0)) throw DataError("hom_five_peak: side peaks are empty");
  h.uncorrelated = h.c_peaks_used ? 2.0 / 3.0 * side : side;
  const double g = h.a / h.uncorrelated;
  const double sg = std::sqrt(std::max(h.a, 1.0) / (h.uncorrelated * h.uncorrelated) + g * g / side);
  h.g2_hom = {g, sg};
  h.visibility = {1.0 - 2.0 * g, 2.0 * sg};
  return h;
}

FitResult hom_delay_scan(std::span<const ScanPoint> scan) {
  if (scan.size() < 7) throw DataError("hom_delay_scan: at least 7 scan points are required");
  const bool unit = unit_weights(scan);
  double r0 = 0.0, y_min = scan[0].y, x_span = 0.0;
  for (const auto& p : scan) {
    r0 = std::max(r0, p.y);
    y_min = std::min(y_min, p.y);
    x_span = std::max(x_span, std::abs(p.x));
  }
  if (!(r0 > 0.0) || !(x_span > 0.0)) throw DataError("hom_delay_scan: degenerate scan");
  auto residuals = [&](std::span<const double> p, std::span<double> r) {
    for (std::size_t i = 0; i < scan.size(); ++i) {
      const double m = p[0] * (1.0 - p[1] * std::exp(-std::abs(scan[i].x) / std::abs(p[2])));
      r[i] = (scan[i].y - m) / (unit ? 1.0 : scan[i].sigma);
    }
  };
  const auto fit = levenberg_marquardt(residuals, scan.size(), {r0, 1.0 - y_min / r0, x_span / 4.0});
  const double red = fit.dof > 0 ? fit.chi2 / static_cast<double>(fit.dof) : 0.0;
  const double scale = unit ? red : 1.0;
  FitResult out;
  out.set("R0", param_estimate(fit, 0, scale));
  out.set("V", param_estimate(fit, 1, scale));
  auto tau = param_estimate(fit, 2, scale);
  tau.value = std::abs(tau.value);
  out.set("tau_c", tau);
  out.reduced_chi2 = red;
  out.converged = fit.converged;
  return out;
}

FitResult fit_rabi(std::span<const ScanPoint> scan, double rate_norm) {
  if (!(rate_norm > 0.0)) throw std::invalid_argument("fit_rabi: rate normalisation must be positive");
  if (scan.size() < 4) throw DataError("fit_rabi: at least 4 scan points are required");
  const bool unit = unit_weights(scan);
  auto best = std::max_element(scan.begin(), scan.end(), [](const auto& a, const auto& b) { return a.y < b.y; });
  if (!(best->x > 0.0) || !(best->y > 0.0)) throw DataError("fit_rabi: no positive maximum in scan");
  auto residuals = [&](std::span<const double> p, std::span<double> r) {
    for (std::size_t i = 0; i < scan.size(); ++i) {
      const double s = std::sin(p[1] * scan[i].x / 2.0);
      r[i] = (scan[i].y - p[0] * s * s) / (unit ? 1.0 : scan[i].sigma);
    }
  };
  // Grid over k up to the sampling limit, A profiled out in closed form; picks the first lobe.
  double x_max = 0.0, dx_min = std::numeric_limits<double>::infinity();
  std::vector<double> xs;
  for (const auto& p : scan) xs.push_back(p.x);
  std::sort(xs.begin(), xs.end());
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (xs[i] > xs[i - 1]) dx_min = std::min(dx_min, xs[i] - xs[i - 1]);
  x_max = xs.back();
  if (!std::isfinite(dx_min)) throw DataError("fit_rabi: scan has a single x value");
  double k0 = std::numbers::pi / best->x, a0 = best->y, best_chi2 = std::numeric_limits<double>::infinity();
  const double k_lo = 0.5 * std::numbers::pi / x_max, k_hi = std::numbers::pi / dx_min;
  constexpr int kGrid = 4000;
  for (int g = 0; g <= kGrid; ++g) {
    const double k = k_lo + (k_hi - k_lo) * g / kGrid;
    double sy = 0.0, ss = 0.0;
    for (const auto& p : scan) {
      const double w = unit ? 1.0 : 1.0 / (p.sigma * p.sigma);
      const double s2 = std::pow(std::sin(k * p.x / 2.0), 2);
      sy += w * p.y * s2;
      ss += w * s2 * s2;
    }
    if (!(ss > 0.0)) continue;
    const double a = sy / ss;
    double chi2 = 0.0;
    for (const auto& p : scan) {
      const double w = unit ? 1.0 : 1.0 / (p.sigma * p.sigma);
      const double d = p.y - a * std::pow(std::sin(k * p.x / 2.0), 2);
      chi2 += w * d * d;
    }
    if (chi2 < best_chi2) {
      best_chi2 = chi2;
      k0 = k;
      a0 = a;
    }
  }
  const auto fit = levenberg_marquardt(residuals, scan.size(), {a0, k0});
  const double red = fit.dof > 0 ? fit.chi2 / static_cast<double>(fit.dof) : 0.0;
  const double scale = unit ? red : 1.0;
  FitResult out;
  const auto amp = param_estimate(fit, 0, scale);
  auto k = param_estimate(fit, 1, scale);
  k.value = std::abs(k.value);
  out.set("A", amp);
  out.set("k", k);
  out.set("x_pi", {std::numbers::pi / k.value, std::numbers::pi * k.sigma / (k.value * k.value)});
  out.set("p_emit_pi", {amp.value / rate_norm, amp.sigma / rate_norm});
  out.reduced_chi2 = red;
  out.converged = fit.converged;
  return out;
}

double purcell_from_lifetimes(double tau_meas_ps, double tau_bulk_ps) {
  if (!(tau_meas_ps > 0.0) || !(tau_bulk_ps > 0.0))
    throw std::invalid_argument("purcell_from_lifetimes: lifetimes must be positive");
  return tau_bulk_ps / tau_meas_ps;
}

nlohmann::json to_json(const G2Result& r) {
  return {{"g2_zero", {{"value", r.g2}, {"sigma", r.sigma}}},
          {"central_area", r.central_area},
          {"far_mean_area", r.far_mean_area},
          {"far_peak_count", r.far_peak_count},
          {"background_per_bin", r.peaks.background_per_bin}};
}

nlohmann::json to_json(const BlinkingResult& r) {
  return {{"on_fraction", {{"value", r.on_fraction.value}, {"sigma", r.on_fraction.sigma}}},
          {"correlation_cycles", r.correlation_cycles},
          {"fitted", r.fitted}};
}

nlohmann::json to_json(const HomPeaks& r) {
  return {{"A", r.a},
          {"B_minus", r.b_minus},
          {"B_plus", r.b_plus},
          {"C_minus", r.c_minus},
          {"C_plus", r.c_plus},
          {"uncorrelated_A", r.uncorrelated},
          {"c_peaks_used", r.c_peaks_used},
          {"g2_hom", {{"value", r.g2_hom.value}, {"sigma", r.g2_hom.sigma}}},
          {"visibility", {{"value", r.visibility.value}, {"sigma", r.visibility.sigma}}}};
}

nlohmann::json to_json(const LifetimeFit& r) {
  return {{"tau_ps", {{"value", r.tau.value}, {"sigma", r.tau.sigma}}},
          {"t0_ps", {{"value", r.t0.value}, {"sigma", r.t0.sigma}}},
          {"tail_tau_ps", {{"value", r.tail_tau.value}, {"sigma", r.tail_tau.sigma}}},
          {"consistent", r.consistent},
          {"sufficient_counts", r.sufficient_counts},
          {"converged", r.converged}};
}

std::vector<ScanPoint> parse_scan_csv(std::string_view text, const std::string& source) {
  const auto table = parse_csv(text, {}, source);
  if (table.header.size() != 2 && table.header.size() != 3)
    throw DataError(source + ": scan files have 2 or 3 columns");
  std::vector<ScanPoint> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    ScanPoint p{table.number(r, 0), table.number(r, 1), table.header.size() == 3 ? table.number(r, 2) : 0.0};
    if (p.sigma < 0.0) throw DataError(source + ": line " + std::to_string(table.line_numbers[r]) + ": negative sigma");
    out.push_back(p);
  }
  return out;
}

std::vector<ScanPoint> read_scan_csv(const std::filesystem::path& path) {
  return parse_scan_csv(read_file(path), path.string());
}

std::string scan_csv(std::span<const ScanPoint> scan, const std::string& x_name, const std::string& y_name) {
  std::ostringstream out;
  out << x_name << ',' << y_name << ",sigma\n";
  for (const auto& p : scan) out << format_double(p.x) << ',' << format_double(p.y) << ',' << format_double(p.sigma) << '\n';
  return out.str();
}

}  // namespace qdtb
