#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>
#include <stdexcept>

#include "CLI11.hpp"
#include "config.hpp"
#include "qdtb/cascade.hpp"
#include "qdtb/cavity.hpp"
#include "qdtb/error.hpp"
#include "qdtb/fitting.hpp"
#include "qdtb/io.hpp"
#include "qdtb/optics.hpp"
#include "qdtb/rng.hpp"
#include "qdtb/tomo.hpp"

namespace qdtb::cli {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::pair<std::string, std::string>>& config_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"seed", ""},
      {"output.dir", "out"},
      {"output.write_events", "false"},
      {"emitter.tau_xx_ps", "300"},
      {"emitter.tau_x_ps", "468"},
      {"emitter.blinking_on_fraction", "0.625"},
      {"emitter.blinking_mean_on_cycles", "50"},
      {"emitter.p_emit_pi", "0.65"},
      {"emitter.two_pair_prob", "0"},
      {"emitter.rep_period_ps", "12500"},
      {"detector.efficiency", "0.25"},
      {"detector.dark_count_rate_hz", "100"},
      {"detector.jitter_fwhm_ps", "16"},
      {"detector.dead_time_ps", "0"},
      {"interferometer.delay_ps", "3000"},
      {"interferometer.split_ratio", "0.5"},
      {"timebin.visibility", "0.70"},
      {"timebin.pump_phase_rad", "0"},
      {"tomography.cycles_per_setting", "200000"},
      {"tomography.window_ps", "500"},
      {"tomography.mc_runs", "50"},
      {"tomography.background_counts", ""},
      {"hom.cycles", "20000000"},
      {"hom.mutual_visibility", "0.482"},
      {"hom.two_pair_prob", "0"},
      {"hom.bin_ps", "20"},
      {"hom.range_ps", "8000"},
      {"hom.scan_offsets_ps", "-1600,-1200,-800,-600,-400,-200,-100,0,100,200,400,600,800,1200,1600"},
      {"hom.scan_visibility", "0.508"},
      {"hom.scan_tau_ps", "400"},
      {"hom.scan_rate", "20000"},
      {"autocorr.cycles", "4000000"},
      {"autocorr.g2_target_xx", "0.016"},
      {"autocorr.g2_target_x", "0.025"},
      {"autocorr.bin_ps", "200"},
      {"autocorr.range_ps", "5000000"},
      {"analysis.g2_window_ps", "0"},
      {"analysis.g2_far_min_order", "0"},
      {"lifetime.cycles", "4000000"},
      {"lifetime.bin_ps", "4"},
      {"lifetime.lo_ps", "-200"},
      {"lifetime.hi_ps", "6000"},
      {"lifetime.tau_bulk_xx_ps", "400"},
      {"lifetime.tau_bulk_x_ps", "800"},
      {"rabi.points", "31"},
      {"rabi.max_x", "3"},
      {"rabi.area_per_x_rad", "3.141592653589793"},
      {"rabi.cycles_per_point", "200000"},
      {"cavity.stack_file", ""},
      {"cavity.n_gaas", "3.48"},
      {"cavity.n_alas", "2.95"},
      {"cavity.t_gaas_nm", "68"},
      {"cavity.t_alas_nm", "82"},
      {"cavity.t_cavity_nm", "270"},
      {"cavity.top_pairs", "5"},
      {"cavity.bottom_pairs", "24"},
      {"cavity.defect_height_nm", "20"},
      {"cavity.defect_diameter_nm", "2000"},
      {"cavity.waist_override_nm", "0"},
      {"cavity.h_sweep_nm", "10,20,30"},
      {"cavity.na_sweep", "0.62,0.7"},
      {"cavity.scan_lo_nm", "850"},
      {"cavity.scan_hi_nm", "1050"},
      {"cavity.scan_step_nm", "0.05"},
      {"cavity.spectrum_lo_nm", "880"},
      {"cavity.spectrum_hi_nm", "1020"},
      {"cavity.spectrum_step_nm", "0.1"},
      {"budget.rep_rate_hz", "80000000"},
      {"budget.blinking", "0.625"},
      {"budget.p_emit", "0.65"},
      {"budget.eta_detector", "0.25"},
      {"budget.eta_setup", "0.12"},
      {"budget.xx.count_rate_hz", "61000"},
      {"budget.xx.eta_fiber", "0.4"},
      {"budget.x.count_rate_hz", "26000"},
      {"budget.x.eta_fiber", "0.18"},
  };
  return keys;
}

namespace {

constexpr const char* kVersion = "qdtb 0.1.0";

struct Context {
  Config cfg;
  std::string command;
  fs::path out_dir;
  int threads = 1;
  std::uint64_t seed = 0;
  std::vector<fs::path> inputs;
  std::vector<fs::path> written;
  std::ostream* log = nullptr;

  void write(const std::string& name, const std::string& content) {
    const auto path = out_dir / name;
    write_file_atomic(path, content);
    written.push_back(path);
    *log << "wrote " << path.string() << '\n';
  }
  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  [[nodiscard]] std::uint64_t derived_seed(std::uint64_t tag) const {
    return CounterRng::from_seed(seed).substream(tag).next_u64();
  }
};

// Wraps precondition failures raised while turning config values into
// model parameters.
template <class Fn>
auto from_config(const std::string& section, Fn&& fn) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("[" + section + "] " + e.what());
  }
}

EmitterParams emitter_from(const Config& c) {
  return from_config("emitter", [&] {
    EmitterParams e;
    e.tau_xx_ps = c.number("emitter.tau_xx_ps");
    e.tau_x_ps = c.number("emitter.tau_x_ps");
    e.blinking_on_fraction = c.number("emitter.blinking_on_fraction");
    e.blinking_mean_on_cycles = c.number("emitter.blinking_mean_on_cycles");
    e.p_emit_pi = c.number("emitter.p_emit_pi");
    e.two_pair_prob = c.number("emitter.two_pair_prob");
    e.rep_period_ps = c.number("emitter.rep_period_ps");
    e.validate();
    return e;
  });
}

DetectorModel detector_from(const Config& c) {
  return from_config("detector", [&] {
    DetectorModel d;
    d.efficiency = c.number("detector.efficiency");
    d.dark_count_rate_hz = c.number("detector.dark_count_rate_hz");
    d.jitter_fwhm_ps = c.number("detector.jitter_fwhm_ps");
    d.dead_time_ps = c.number("detector.dead_time_ps");
    d.validate();
    return d;
  });
}

Interferometer interferometer_from(const Config& c) {
  return from_config("interferometer", [&] {
    Interferometer i;
    i.delay_ps = c.number("interferometer.delay_ps");
    i.split_ratio = c.number("interferometer.split_ratio");
    i.validate();
    return i;
  });
}

std::int64_t positive_integer(const Config& c, const std::string& key) {
  const auto v = c.integer(key);
  if (v <= 0) throw ConfigError("key '" + key + "' must be a positive integer");
  return v;
}

double positive_number(const Config& c, const std::string& key) {
  const auto v = c.number(key);
  if (!(v > 0.0)) throw ConfigError("key '" + key + "' must be positive");
  return v;
}

CoincidenceHistogram crop(const CoincidenceHistogram& h, double lo, double hi) {
  std::size_t first = 0;
  while (first < h.size() && h.bin_left(first) < lo - 1e-9) ++first;
  std::size_t last = first;
  while (last < h.size() && h.bin_left(last + 1) <= hi + 1e-9) ++last;
  CoincidenceHistogram out(h.bin_width(), h.bin_left(first), last - first);
  for (std::size_t i = first; i < last; ++i) out.set(i - first, h.counts()[i]);
  return out;
}

std::string meta_text(double v) { return format_double(v); }

// ---- simulate ------------------------------------------------------------

void simulate_tomography(Context& ctx) {
  const auto& c = ctx.cfg;
  TimebinSetup setup;
  setup.emitter = emitter_from(c);
  setup.state = from_config("timebin", [&] {
    TimebinStateModel s;
    s.visibility = c.number("timebin.visibility");
    s.pump_phase_rad = c.number("timebin.pump_phase_rad");
    s.pump_delay_ps = c.number("interferometer.delay_ps");
    s.validate();
    return s;
  });
  setup.xx_analyzer = setup.x_analyzer = interferometer_from(c);
  setup.xx_detector = setup.x_detector = detector_from(c);
  const auto cycles = positive_integer(c, "tomography.cycles_per_setting");
  const double window = positive_number(c, "tomography.window_ps");
  const auto counts = tomography_experiment(setup, cycles, ctx.seed, {ctx.threads}, window);
  ctx.write("tomography_counts.csv", counts_csv(counts));
}

void simulate_hom(Context& ctx) {
  const auto& c = ctx.cfg;
  HomSetup setup;
  setup.emitter = emitter_from(c);
  setup.emitter.two_pair_prob = c.number("hom.two_pair_prob");
  setup.analyzer = interferometer_from(c);
  setup.detector_1 = setup.detector_2 = detector_from(c);
  setup.mutual_visibility = c.number("hom.mutual_visibility");
  if (!(setup.mutual_visibility >= 0.0 && setup.mutual_visibility <= 1.0))
    throw ConfigError("key 'hom.mutual_visibility' must be in [0, 1]");
  from_config("emitter", [&] { setup.emitter.validate(); return 0; });
  const auto cycles = positive_integer(c, "hom.cycles");
  const auto events = simulate_hom_run(setup, cycles, ctx.derived_seed(1), {ctx.threads});
  const auto hist = histogram_events(events, 0, 1, positive_number(c, "hom.bin_ps"), positive_number(c, "hom.range_ps"));
  ctx.write("hom_histogram.csv", histogram_csv(hist, {{"delay_ps", meta_text(setup.analyzer.delay_ps)}}));
  if (c.boolean("output.write_events", false)) {
    write_events_csv(ctx.out_dir / "hom_events.csv", events);
    ctx.written.push_back(ctx.out_dir / "hom_events.csv");
  }

  // Synthetic delay scan with Poisson noise around the two-sided dip.
  const auto offsets = c.numbers("hom.scan_offsets_ps", {});
  const double v = c.number("hom.scan_visibility"), tau = positive_number(c, "hom.scan_tau_ps");
  const double rate = positive_number(c, "hom.scan_rate");
  auto rng = CounterRng::from_seed(ctx.derived_seed(2));
  std::vector<ScanPoint> scan;
  for (double d : offsets) {
    const auto n = static_cast<double>(rng.poisson(rate * (1.0 - v * std::exp(-std::abs(d) / tau))));
    scan.push_back({d, n, std::sqrt(std::max(n, 1.0))});
  }
  ctx.write("hom_scan.csv", scan_csv(scan, "offset_ps", "coincidences"));
}

void simulate_autocorr(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto base = emitter_from(c);
  const auto detector = detector_from(c);
  const auto cycles = positive_integer(c, "autocorr.cycles");
  const double bin = positive_number(c, "autocorr.bin_ps"), range = positive_number(c, "autocorr.range_ps");
  const std::pair<Species, const char*> species[] = {{Species::kBiexciton, "xx"}, {Species::kExciton, "x"}};
  std::uint64_t tag = 10;
  for (const auto& [sp, name] : species) {
    AutocorrelationSetup setup;
    setup.emitter = base;
    setup.photon = sp;
    setup.detector_1 = setup.detector_2 = detector;
    const std::string key = std::string("autocorr.g2_target_") + name;
    setup.emitter.two_pair_prob = from_config("autocorr", [&] {
      return two_pair_prob_for_g2(c.number(key), base.p_emit_pi, base.blinking_on_fraction);
    });
    from_config("autocorr", [&] { setup.emitter.validate(); return 0; });
    const auto events = simulate_autocorrelation(setup, cycles, ctx.derived_seed(tag++), {ctx.threads});
    const auto hist = histogram_events(events, 0, 1, bin, range);
    ctx.write(std::string("autocorr_") + name + "_histogram.csv",
              histogram_csv(hist, {{"species", name},
                                   {"rep_period_ps", meta_text(base.rep_period_ps)},
                                   {"two_pair_prob", meta_text(setup.emitter.two_pair_prob)}}));
  }
}

void simulate_lifetime(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto emitter = emitter_from(c);
  const auto detector = detector_from(c);
  const auto cycles = positive_integer(c, "lifetime.cycles");
  const double bin = positive_number(c, "lifetime.bin_ps");
  const double lo = c.number("lifetime.lo_ps"), hi = c.number("lifetime.hi_ps");
  if (!(hi > lo)) throw ConfigError("key 'lifetime.hi_ps' must exceed 'lifetime.lo_ps'");
  const auto events = simulate_cascade_run(emitter, detector, detector, cycles, ctx.derived_seed(20), {ctx.threads});
  const double sigma = detector.jitter_sigma_ps();
  const auto xx = decay_histogram(events, kChannelXX, emitter.rep_period_ps, bin, lo, hi);
  ctx.write("lifetime_xx_histogram.csv",
            histogram_csv(xx, {{"species", "xx"}, {"jitter_sigma_ps", meta_text(sigma)}}));
  const double range = std::max(std::abs(lo), std::abs(hi));
  const auto x = crop(histogram_events(events, kChannelXX, kChannelX, bin, range), lo, hi);
  ctx.write("lifetime_x_histogram.csv",
            histogram_csv(x, {{"species", "x"}, {"jitter_sigma_ps", meta_text(std::sqrt(2.0) * sigma)}}));
}

void simulate_rabi(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto emitter = emitter_from(c);
  const auto detector = detector_from(c);
  const auto points = positive_integer(c, "rabi.points");
  if (points < 4) throw ConfigError("key 'rabi.points' must be at least 4");
  const double max_x = positive_number(c, "rabi.max_x");
  const double k = positive_number(c, "rabi.area_per_x_rad");
  const auto cycles = positive_integer(c, "rabi.cycles_per_point");
  std::vector<ScanPoint> scan;
  const auto root = CounterRng::from_seed(ctx.derived_seed(30));
  for (std::int64_t i = 0; i < points; ++i) {
    const double x = max_x * static_cast<double>(i) / static_cast<double>(points - 1);
    const auto seed = root.substream(static_cast<std::uint64_t>(i)).next_u64();
    const auto records = sample_pair_emission(emitter, PulseTrain::single(k * x), cycles, seed, {ctx.threads});
    auto rng = root.substream(static_cast<std::uint64_t>(i)).substream(1);
    double n = 0.0;
    for (std::size_t r = 0; r < records.size(); ++r) n += rng.bernoulli(detector.efficiency) ? 1.0 : 0.0;
    scan.push_back({x, n, std::sqrt(std::max(n, 1.0))});
  }
  const double norm = static_cast<double>(cycles) * emitter.blinking_on_fraction * detector.efficiency;
  ctx.write("rabi_scan.csv", "# rate_norm=" + format_double(norm) + "\n" + scan_csv(scan, "sqrt_power", "counts"));
}

// ---- analyze -------------------------------------------------------------

std::vector<fs::path> inputs_or(const Context& ctx, std::vector<std::string> defaults) {
  if (!ctx.inputs.empty()) return ctx.inputs;
  std::vector<fs::path> out;
  for (auto& d : defaults) out.push_back(ctx.out_dir / d);
  return out;
}

json input_record(const fs::path& p, const std::string& text) {
  return {{"path", p.string()}, {"fnv1a64", hex64(fnv1a64(text))}};
}

void analyze_tomo(Context& ctx) {
  const auto& c = ctx.cfg;
  ReconstructionOptions options;
  if (c.has("tomography.background_counts")) options.flat_background = c.number("tomography.background_counts");
  const auto runs = c.integer("tomography.mc_runs");
  if (runs < 2) throw ConfigError("key 'tomography.mc_runs' must be at least 2");
  json results = json::array();
  for (const auto& path : inputs_or(ctx, {"tomography_counts.csv"})) {
    const auto text = read_file(path);
    const auto counts = parse_counts_csv(text, path.string());
    const auto r = reconstruct(counts, static_cast<int>(runs), ctx.seed, ctx.threads, options);
    if (!r.converged) throw ConvergenceError("maximum-likelihood reconstruction did not converge for " + path.string());
    auto j = to_json(r);
    j["input"] = input_record(path, text);
    j["background_subtraction"] = options.flat_background.has_value();
    results.push_back(j);
  }
  ctx.write_json("tomo_result.json", {{"config_hash", hex64(c.hash())}, {"results", results}});
}

void analyze_g2(Context& ctx) {
  const auto& c = ctx.cfg;
  const double rep = positive_number(c, "emitter.rep_period_ps");
  G2Options options;
  options.window_ps = c.number("analysis.g2_window_ps");
  options.far_min_order = static_cast<int>(c.integer("analysis.g2_far_min_order"));
  json results = json::array();
  for (const auto& path : inputs_or(ctx, {"autocorr_xx_histogram.csv", "autocorr_x_histogram.csv"})) {
    const auto text = read_file(path);
    const auto hist = parse_histogram_csv(text, path.string());
    const auto table = parse_csv(text, {"delay_ps", "counts"}, path.string());
    auto j = to_json(g2_zero(hist, rep, options));
    j["blinking"] = to_json(blinking_factor(hist, rep, options));
    if (table.has_meta("species")) j["species"] = table.meta.at("species");
    j["input"] = input_record(path, text);
    results.push_back(j);
  }
  ctx.write_json("g2_result.json", {{"config_hash", hex64(c.hash())}, {"results", results}});
}

void analyze_hom(Context& ctx) {
  const auto& c = ctx.cfg;
  const double delay = positive_number(c, "interferometer.delay_ps");
  const double rep = positive_number(c, "emitter.rep_period_ps");
  json results = json::array();
  for (const auto& path : inputs_or(ctx, {"hom_histogram.csv", "hom_scan.csv"})) {
    const auto text = read_file(path);
    const auto table = parse_csv(text, {}, path.string());
    json j;
    if (table.has_meta("bin_width_ps")) {
      j = to_json(hom_five_peak(parse_histogram_csv(text, path.string()), delay, 0.0, rep));
      j["kind"] = "five_peak";
    } else {
      const auto scan = parse_scan_csv(text, path.string());
      const auto fit = hom_delay_scan(scan);
      if (!fit.converged) throw ConvergenceError("delay-scan fit did not converge for " + path.string());
      j = to_json(fit);
      j["kind"] = "delay_scan";
    }
    j["input"] = input_record(path, text);
    results.push_back(j);
  }
  ctx.write_json("hom_result.json", {{"config_hash", hex64(c.hash())}, {"results", results}});
}

void analyze_lifetime(Context& ctx) {
  const auto& c = ctx.cfg;
  const double config_sigma = detector_from(c).jitter_sigma_ps();
  json results = json::array();
  for (const auto& path : inputs_or(ctx, {"lifetime_xx_histogram.csv", "lifetime_x_histogram.csv"})) {
    const auto text = read_file(path);
    const auto hist = parse_histogram_csv(text, path.string());
    const auto table = parse_csv(text, {"delay_ps", "counts"}, path.string());
    const double sigma = table.has_meta("jitter_sigma_ps") ? table.meta_number("jitter_sigma_ps") : config_sigma;
    const auto fit = fit_lifetime(hist, sigma);
    if (!fit.converged) throw ConvergenceError("lifetime fit did not converge for " + path.string());
    auto j = to_json(fit);
    if (table.has_meta("species")) {
      const auto sp = table.meta.at("species");
      j["species"] = sp;
      const std::string key = "lifetime.tau_bulk_" + sp + "_ps";
      if (c.has(key)) {
        const double bulk = positive_number(c, key);
        j["tau_bulk_ps"] = bulk;
        j["purcell_ratio"] = purcell_from_lifetimes(fit.tau.value, bulk);
      }
    }
    j["jitter_sigma_ps"] = sigma;
    j["input"] = input_record(path, text);
    results.push_back(j);
  }
  ctx.write_json("lifetime_result.json", {{"config_hash", hex64(c.hash())}, {"results", results}});
}

void analyze_rabi(Context& ctx) {
  const auto& c = ctx.cfg;
  json results = json::array();
  for (const auto& path : inputs_or(ctx, {"rabi_scan.csv"})) {
    const auto text = read_file(path);
    const auto table = parse_csv(text, {}, path.string());
    if (!table.has_meta("rate_norm")) throw DataError(path.string() + ": missing '# rate_norm=' line");
    const auto fit = fit_rabi(parse_scan_csv(text, path.string()), table.meta_number("rate_norm"));
    if (!fit.converged) throw ConvergenceError("Rabi fit did not converge for " + path.string());
    auto j = to_json(fit);
    j["input"] = input_record(path, text);
    results.push_back(j);
  }
  ctx.write_json("rabi_result.json", {{"config_hash", hex64(c.hash())}, {"results", results}});
}

void analyze_budget(Context& ctx) {
  const auto& c = ctx.cfg;
  json channels = json::object();
  for (const char* ch : {"xx", "x"}) {
    const std::string p = std::string("budget.") + ch + ".";
    EfficiencyBudget b;
    b.count_rate_hz = c.number(p + "count_rate_hz");
    b.rep_rate_hz = c.number("budget.rep_rate_hz");
    b.blinking = c.number("budget.blinking");
    b.p_emit = c.number("budget.p_emit");
    b.eta_detector = c.number("budget.eta_detector");
    b.eta_fiber = c.number(p + "eta_fiber");
    b.eta_setup = c.number("budget.eta_setup");
    channels[ch] = to_json(from_config("budget", [&] { return efficiency_budget(b); }));
  }
  ctx.write_json("budget_ledger.json", {{"config_hash", hex64(c.hash())}, {"channels", channels}});
}

// ---- cavity --------------------------------------------------------------

LayerStack stack_from(Context& ctx) {
  const auto& c = ctx.cfg;
  if (c.has("cavity.stack_file")) {
    const fs::path path = c.text("cavity.stack_file");
    ctx.inputs.push_back(path);
    return read_stack_csv(path);
  }
  return from_config("cavity", [&] {
    CavityDesign d;
    d.n_gaas = c.number("cavity.n_gaas");
    d.n_alas = c.number("cavity.n_alas");
    d.t_gaas_nm = c.number("cavity.t_gaas_nm");
    d.t_alas_nm = c.number("cavity.t_alas_nm");
    d.t_cavity_nm = c.number("cavity.t_cavity_nm");
    d.top_pairs = static_cast<int>(c.integer("cavity.top_pairs"));
    d.bottom_pairs = static_cast<int>(c.integer("cavity.bottom_pairs"));
    if (d.top_pairs < 0 || d.bottom_pairs < 0) throw std::invalid_argument("pair counts must be non-negative");
    return cavity_stack(d);
  });
}

ScanRange scan_from(const Config& c) {
  ScanRange r{c.number("cavity.scan_lo_nm"), c.number("cavity.scan_hi_nm"), c.number("cavity.scan_step_nm")};
  if (!(r.lo_nm > 0.0 && r.hi_nm > r.lo_nm && r.step_nm > 0.0)) throw ConfigError("[cavity] invalid scan range");
  return r;
}

DefectModel defect_from(const Config& c, double height) {
  return from_config("cavity", [&] {
    DefectModel d;
    d.height_nm = height;
    d.diameter_nm = c.number("cavity.defect_diameter_nm");
    d.waist_override_nm = c.number("cavity.waist_override_nm");
    d.validate();
    return d;
  });
}

std::vector<double> spectrum_grid(const Config& c) {
  return from_config("cavity", [&] {
    return wavelength_grid(c.number("cavity.spectrum_lo_nm"), c.number("cavity.spectrum_hi_nm"),
                           c.number("cavity.spectrum_step_nm"));
  });
}

void cavity_spectrum(Context& ctx) {
  const auto stack = stack_from(ctx);
  const auto grid = spectrum_grid(ctx.cfg);
  const auto spectrum = transfer_matrix_spectrum(stack, grid, ctx.threads);
  ctx.write("cavity_spectrum.csv", spectrum_csv(spectrum));
  ctx.write("stack.csv", stack_csv(stack));
  json j = {{"config_hash", hex64(ctx.cfg.hash())}};
  if (stack.cavity_layer) j["resonance"] = to_json(cavity_resonance_and_q(stack, scan_from(ctx.cfg)));
  ctx.write_json("cavity_resonance.json", j);
}

void cavity_purcell(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto stack = stack_from(ctx);
  const auto grid = spectrum_grid(c);
  const auto heights = c.numbers("cavity.h_sweep_nm", {});
  json estimates = json::array();
  std::vector<std::vector<std::pair<double, double>>> curves;
  std::string header = "wavelength_nm";
  for (double h : heights) {
    const auto est = purcell_estimate(stack, defect_from(c, h), scan_from(c));
    auto j = to_json(est);
    j["height_nm"] = h;
    estimates.push_back(j);
    curves.push_back(purcell_spectrum(est, grid));
    header += ",purcell_h" + format_double(h);
  }
  std::string csv = header + "\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    csv += format_double(grid[i]);
    for (const auto& curve : curves) csv += "," + format_double(curve[i].second);
    csv += "\n";
  }
  ctx.write("purcell_spectrum.csv", csv);
  ctx.write_json("purcell.json", {{"config_hash", hex64(c.hash())}, {"estimates", estimates}});
}

void cavity_efficiency(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto stack = stack_from(ctx);
  const auto defect = defect_from(c, c.number("cavity.defect_height_nm"));
  json rows = json::array();
  for (double na : c.numbers("cavity.na_sweep", {})) {
    const auto e = from_config("cavity", [&] { return extraction_efficiency(stack, defect, na, scan_from(c)); });
    auto j = to_json(e);
    j["na"] = na;
    rows.push_back(j);
  }
  ctx.write_json("extraction.json", {{"config_hash", hex64(c.hash())}, {"height_nm", defect.height_nm}, {"sweep", rows}});
}

// ---- driver --------------------------------------------------------------

Config effective_config(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  Config file = Config::load(path);
  std::vector<std::string> known;
  for (const auto& [k, v] : config_keys()) known.push_back(k);
  file.reject_unknown(known);
  Config eff = file;
  for (const auto& [k, v] : config_keys())
    if (!v.empty() && !eff.has(k)) eff.set(k, v);
  if (seed_override) eff.set("seed", std::to_string(*seed_override));
  return eff;
}

void write_manifest(Context& ctx, double elapsed_ms) {
  json outputs = json::array();
  for (const auto& p : ctx.written) outputs.push_back(input_record(p, read_file(p)));
  json inputs = json::array();
  for (const auto& p : ctx.inputs)
    if (fs::exists(p)) inputs.push_back(input_record(p, read_file(p)));
  std::string name = ctx.command;
  std::replace(name.begin(), name.end(), ' ', '_');
  const json m = {{"command", ctx.command},
                  {"version", kVersion},
                  {"config", ctx.cfg.source()},
                  {"config_hash", hex64(ctx.cfg.hash())},
                  {"seed", ctx.seed},
                  {"threads", ctx.threads},
                  {"inputs", inputs},
                  {"outputs", outputs},
                  {"wall_time_ms", elapsed_ms}};
  write_file_atomic(ctx.out_dir / ("manifest_" + name + ".json"), m.dump(2) + "\n");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quantum-dot time-bin entanglement simulator and analysis toolkit", "qdtb"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  int threads = 1;
  std::vector<std::string> inputs;
  app.add_option("--config", config_path, "configuration file")->required();
  app.add_option("--seed", seed, "overrides the seed in the config");
  app.add_option("--out", out_dir, "output directory (overrides output.dir)");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  using Handler = std::function<void(Context&)>;
  std::vector<std::tuple<CLI::App*, std::string, Handler>> leaves;
  auto group = [&](const std::string& name, const std::string& help,
                   std::vector<std::tuple<std::string, std::string, Handler>> subs) {
    auto* g = app.add_subcommand(name, help);
    g->require_subcommand(1);
    g->fallthrough();
    for (auto& [sub, sub_help, fn] : subs) {
      auto* leaf = g->add_subcommand(sub, sub_help);
      leaf->fallthrough();
      if (name == "analyze") leaf->add_option("--input", inputs, "input file (repeatable)");
      leaves.emplace_back(leaf, name + " " + sub, fn);
    }
  };
  group("simulate", "generate synthetic data",
        {{"tomography", "16-setting time-bin tomography counts", simulate_tomography},
         {"hom", "two-photon interference histogram and delay scan", simulate_hom},
         {"autocorr", "biexciton and exciton autocorrelation histograms", simulate_autocorr},
         {"lifetime", "decay histograms of both cascade photons", simulate_lifetime},
         {"rabi", "emission rate versus pulse area", simulate_rabi}});
  group("analyze", "extract results from data files",
        {{"tomo", "maximum-likelihood density matrix with Monte-Carlo errors", analyze_tomo},
         {"g2", "zero-delay autocorrelation and blinking factor", analyze_g2},
         {"hom", "five-peak ratio or delay-scan visibility", analyze_hom},
         {"lifetime", "decay times and lifetime ratios", analyze_lifetime},
         {"rabi", "pi-pulse position and emission probability", analyze_rabi},
         {"budget", "first-lens collection efficiency ledger", analyze_budget}});
  group("cavity", "planar cavity model",
        {{"spectrum", "reflectance, transmittance and resonance", cavity_spectrum},
         {"purcell", "Purcell factor over the defect-height sweep", cavity_purcell},
         {"efficiency", "extraction efficiency over the NA sweep", cavity_efficiency}});

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  Context ctx;
  ctx.log = &out;
  ctx.threads = threads;
  ctx.inputs.assign(inputs.begin(), inputs.end());
  int code = 1;
  try {
    ctx.cfg = effective_config(config_path, seed);
    ctx.seed = ctx.cfg.unsigned_integer("seed");
    ctx.out_dir = out_dir.empty() ? fs::path(ctx.cfg.text("output.dir")) : fs::path(out_dir);
    const Handler* handler = nullptr;
    for (const auto& [leaf, name, fn] : leaves)
      if (leaf->parsed()) {
        ctx.command = name;
        handler = &fn;
      }
    std::error_code ec;
    fs::create_directories(ctx.out_dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + ctx.out_dir.string());
    const auto t0 = std::chrono::steady_clock::now();
    (*handler)(ctx);
    const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(ctx, ms);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    code = kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    code = kExitData;
  } catch (const ConvergenceError& e) {
    err << "numerical error: " << e.what() << '\n';
    code = kExitConvergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  for (const auto& p : ctx.written) {
    std::error_code ec;
    fs::remove(p, ec);
  }
  return code;
}

}  // namespace qdtb::cli
