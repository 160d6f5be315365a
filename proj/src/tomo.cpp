#include "qdtb/tomo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "qdtb/error.hpp"
#include "qdtb/io.hpp"
#include "qdtb/linalg.hpp"
#include "qdtb/optimize.hpp"
#include "qdtb/parallel.hpp"
#include "qdtb/rng.hpp"

namespace qdtb {
namespace {

constexpr std::uint64_t kCountStream = 0x70c0;
constexpr std::uint64_t kResampleStream = 0x3c3c;
constexpr std::uint64_t kSettingStream = 0x5e77;

double slot_weight(Projector p) { return (p == Projector::kEarly || p == Projector::kLate) ? 0.25 : 0.5; }

std::size_t slot_of(Projector p) {
  switch (p) {
    case Projector::kEarly: return kSlotEarly;
    case Projector::kLate: return kSlotLate;
    default: return kSlotMiddle;
  }
}

double analyzer_phase(Projector p) { return p == Projector::kPlusI ? -std::numbers::pi / 2.0 : 0.0; }

const std::array<ComplexMatrix, kSettingCount>& projectors() {
  static const auto table = [] {
    std::array<ComplexMatrix, kSettingCount> out;
    const auto settings = tomography_settings();
    for (std::size_t s = 0; s < kSettingCount; ++s) out[s] = setting_projector(settings[s]);
    return out;
  }();
  return table;
}

// Dual basis D_s with Tr(D_s P_t) = delta_st, from the inverse Gram matrix.
const std::array<ComplexMatrix, kSettingCount>& dual_basis() {
  static const auto table = [] {
    const auto& p = projectors();
    RealMatrix gram(kSettingCount, kSettingCount);
    for (std::size_t s = 0; s < kSettingCount; ++s)
      for (std::size_t t = 0; t < kSettingCount; ++t) gram(s, t) = trace_of_product(p[s], p[t]).real();
    const auto inv = invert(gram);
    if (!inv) throw std::logic_error("tomography design matrix is singular");
    std::array<ComplexMatrix, kSettingCount> out;
    for (std::size_t s = 0; s < kSettingCount; ++s) {
      out[s] = ComplexMatrix(4);
      for (std::size_t t = 0; t < kSettingCount; ++t) out[s] += p[t] * Complex((*inv)(s, t));
    }
    return out;
  }();
  return table;
}

std::array<double, kSettingCount> corrected_counts(const CountsTable& counts, const ReconstructionOptions& options) {
  std::array<double, kSettingCount> n{};
  const double bg = options.flat_background.value_or(0.0);
  for (std::size_t s = 0; s < kSettingCount; ++s) n[s] = std::max(0.0, static_cast<double>(counts.counts[s]) - bg);
  return n;
}

// T lower triangular: 4 real diagonal entries, then (re, im) of the 6
// entries below the diagonal in row-major order.
ComplexMatrix unpack_t(std::span<const double> x) {
  ComplexMatrix t(4);
  std::size_t k = 4;
  for (std::size_t i = 0; i < 4; ++i) {
    t(i, i) = x[i];
    for (std::size_t j = 0; j < i; ++j, k += 2) t(i, j) = Complex(x[k], x[k + 1]);
  }
  return t;
}

std::vector<double> pack_t(const ComplexMatrix& t) {
  std::vector<double> x(16);
  std::size_t k = 4;
  for (std::size_t i = 0; i < 4; ++i) {
    x[i] = t(i, i).real();
    for (std::size_t j = 0; j < i; ++j, k += 2) {
      x[k] = t(i, j).real();
      x[k + 1] = t(i, j).imag();
    }
  }
  return x;
}

// Lower-triangular T with T^dagger T = a for positive definite a, via the
// Cholesky factor of the index-reversed matrix.
ComplexMatrix reversed_cholesky(const ComplexMatrix& a) {
  const std::size_t n = a.dim();
  ComplexMatrix r(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) r(i, j) = a(n - 1 - i, n - 1 - j);
  ComplexMatrix l(n);
  for (std::size_t j = 0; j < n; ++j) {
    Complex d = r(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * std::conj(l(j, k));
    const double djj = std::sqrt(std::max(d.real(), 1e-300));
    l(j, j) = djj;
    for (std::size_t i = j + 1; i < n; ++i) {
      Complex v = r(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * std::conj(l(j, k));
      l(i, j) = v / djj;
    }
  }
  // T = J L^dagger J
  ComplexMatrix t(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) t(i, j) = std::conj(l(n - 1 - j, n - 1 - i));
  return t;
}

double log_factorial(double n) { return std::lgamma(n + 1.0); }

}  // namespace

const char* label(Projector p) noexcept {
  switch (p) {
    case Projector::kEarly: return "E";
    case Projector::kLate: return "L";
    case Projector::kPlus: return "P";
    case Projector::kPlusI: return "Pi";
  }
  return "?";
}

Projector projector_from_label(std::string_view text) {
  if (text == "E") return Projector::kEarly;
  if (text == "L") return Projector::kLate;
  if (text == "P") return Projector::kPlus;
  if (text == "Pi") return Projector::kPlusI;
  throw DataError("unknown projector label '" + std::string(text) + "'");
}

std::array<Complex, 2> projector_vector(Projector p) {
  const double h = 1.0 / std::sqrt(2.0);
  switch (p) {
    case Projector::kEarly: return {1.0, 0.0};
    case Projector::kLate: return {0.0, 1.0};
    case Projector::kPlus: return {h, h};
    case Projector::kPlusI: return {h, Complex(0.0, h)};
  }
  return {};
}

std::array<TomographySetting, kSettingCount> tomography_settings() {
  std::array<TomographySetting, kSettingCount> out;
  for (std::size_t i = 0; i < kSettingCount; ++i)
    out[i] = {static_cast<Projector>(i / 4), static_cast<Projector>(i % 4)};
  return out;
}

std::size_t setting_index(const TomographySetting& s) noexcept {
  return 4 * static_cast<std::size_t>(s.xx) + static_cast<std::size_t>(s.x);
}

ComplexMatrix setting_projector(const TomographySetting& s) {
  const auto a = projector_vector(s.xx);
  const auto b = projector_vector(s.x);
  const std::array<Complex, 4> v = {a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]};
  return outer(v, v);
}

double expected_probability(const DensityMatrix& rho, const TomographySetting& s) {
  return std::clamp(trace_of_product(rho.matrix(), projectors()[setting_index(s)]).real(), 0.0, 1.0);
}

double CountsTable::exposure(std::size_t s) const {
  double e = static_cast<double>(acquisition_cycles) * efficiency_product;
  if (slot_weighted) e *= slot_weight(static_cast<Projector>(s / 4)) * slot_weight(static_cast<Projector>(s % 4));
  return e;
}

std::uint64_t CountsTable::total() const noexcept {
  std::uint64_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

void CountsTable::validate() const {
  if (acquisition_cycles <= 0) throw DataError("counts table: acquisition_cycles must be positive");
  if (!(efficiency_product > 0.0 && efficiency_product <= 1.0))
    throw DataError("counts table: efficiency_product must be in (0, 1]");
}

CountsTable simulate_counts(const DensityMatrix& rho, std::int64_t per_setting_cycles, double efficiency_product,
                            std::uint64_t seed) {
  CountsTable table;
  table.acquisition_cycles = per_setting_cycles;
  table.efficiency_product = efficiency_product;
  table.validate();
  const auto root = CounterRng::from_seed(seed).substream(kCountStream);
  const auto settings = tomography_settings();
  for (std::size_t s = 0; s < kSettingCount; ++s) {
    auto rng = root.substream(s);
    table.counts[s] = rng.poisson(table.exposure(s) * expected_probability(rho, settings[s]));
  }
  return table;
}

CountsTable expected_counts(const DensityMatrix& rho, std::int64_t per_setting_cycles, double efficiency_product) {
  CountsTable table;
  table.acquisition_cycles = per_setting_cycles;
  table.efficiency_product = efficiency_product;
  table.validate();
  const auto settings = tomography_settings();
  for (std::size_t s = 0; s < kSettingCount; ++s)
    table.counts[s] = static_cast<std::uint64_t>(std::llround(table.exposure(s) * expected_probability(rho, settings[s])));
  return table;
}

ComplexMatrix linear_reconstruct(const std::array<double, kSettingCount>& probabilities) {
  const auto& dual = dual_basis();
  ComplexMatrix m(4);
  for (std::size_t s = 0; s < kSettingCount; ++s) m += dual[s] * Complex(probabilities[s]);
  const double tr = m.trace().real();
  if (!(std::abs(tr) > 0.0)) throw DataError("linear reconstruction: all frequencies are zero");
  m *= Complex(1.0 / tr);
  return (m + m.adjoint()) * Complex(0.5);
}

ComplexMatrix linear_reconstruct(const CountsTable& counts, const ReconstructionOptions& options) {
  counts.validate();
  const auto n = corrected_counts(counts, options);
  std::array<double, kSettingCount> f{};
  for (std::size_t s = 0; s < kSettingCount; ++s) f[s] = n[s] / counts.exposure(s);
  return linear_reconstruct(f);
}

double poisson_log_likelihood(const CountsTable& counts, const DensityMatrix& rho,
                              const ReconstructionOptions& options) {
  counts.validate();
  const auto n = corrected_counts(counts, options);
  const auto& p = projectors();
  std::array<double, kSettingCount> base{};
  double n_total = 0.0, base_total = 0.0;
  for (std::size_t s = 0; s < kSettingCount; ++s) {
    base[s] = counts.exposure(s) * std::max(0.0, trace_of_product(rho.matrix(), p[s]).real());
    n_total += n[s];
    base_total += base[s];
  }
  const double scale = base_total > 0.0 ? n_total / base_total : 0.0;
  double ll = 0.0;
  for (std::size_t s = 0; s < kSettingCount; ++s) {
    const double mu = scale * base[s];
    if (n[s] > 0.0) {
      if (!(mu > 0.0)) return -std::numeric_limits<double>::infinity();
      ll += n[s] * std::log(mu);
    }
    ll -= mu + log_factorial(n[s]);
  }
  return ll;
}

MleResult mle_reconstruct(const CountsTable& counts, const ComplexMatrix& init, const ReconstructionOptions& options) {
  counts.validate();
  const auto n = corrected_counts(counts, options);
  const auto& p = projectors();
  std::array<double, kSettingCount> e{};
  for (std::size_t s = 0; s < kSettingCount; ++s) e[s] = counts.exposure(s);

  ComplexMatrix start = project_to_physical(init).matrix();
  // Keep the start strictly inside the cone so that its Cholesky factor exists.
  start = start * Complex(1.0 - 1e-6) + ComplexMatrix::identity(4) * Complex(0.25e-6);
  double n_total = 0.0, base_total = 0.0;
  for (std::size_t s = 0; s < kSettingCount; ++s) {
    n_total += n[s];
    base_total += e[s] * trace_of_product(start, p[s]).real();
  }
  if (!(n_total > 0.0)) throw DataError("maximum-likelihood reconstruction: all counts are zero");
  const auto x0 = pack_t(reversed_cholesky(start * Complex(n_total / base_total)));

  auto objective = [&](std::span<const double> x, std::span<double> grad) {
    const ComplexMatrix t = unpack_t(x);
    const ComplexMatrix a = t.adjoint() * t;
    ComplexMatrix w(4);
    double f = 0.0;
    for (std::size_t s = 0; s < kSettingCount; ++s) {
      const double mu = std::max(e[s] * trace_of_product(a, p[s]).real(), 1e-300);
      f += mu - (n[s] > 0.0 ? n[s] * std::log(mu) : 0.0);
      w += p[s] * Complex(e[s] * (1.0 - n[s] / mu));
    }
    if (!grad.empty()) {
      const ComplexMatrix tw = t * w;
      std::size_t k = 4;
      for (std::size_t i = 0; i < 4; ++i) {
        grad[i] = 2.0 * tw(i, i).real();
        for (std::size_t j = 0; j < i; ++j, k += 2) {
          grad[k] = 2.0 * tw(i, j).real();
          grad[k + 1] = 2.0 * tw(i, j).imag();
        }
      }
    }
    return f;
  };

  BfgsOptions bo;
  bo.max_iterations = options.max_iterations;
  bo.f_tolerance = options.tolerance;
  const auto res = minimize_bfgs(objective, x0, bo);
  const ComplexMatrix t = unpack_t(res.x);
  MleResult out;
  out.rho = DensityMatrix::normalized(t.adjoint() * t);
  out.log_likelihood = poisson_log_likelihood(counts, out.rho, options);
  out.iterations = res.iterations;
  out.converged = res.converged;
  return out;
}

MleResult mle_reconstruct(const CountsTable& counts, const ReconstructionOptions& options) {
  return mle_reconstruct(counts, linear_reconstruct(counts, options), options);
}

MonteCarloErrors monte_carlo_errors(const CountsTable& counts, int runs, std::uint64_t seed, int threads,
                                    const ReconstructionOptions& options, const CountResampler& resampler) {
  if (runs < 2) throw std::invalid_argument("monte_carlo_errors: runs must be at least 2");
  counts.validate();
  const auto root = CounterRng::from_seed(seed).substream(kResampleStream);
  std::vector<double> c(static_cast<std::size_t>(runs)), f(static_cast<std::size_t>(runs));
  const auto target = TwoQubitState::phi_plus();
  parallel_for(static_cast<std::size_t>(runs), threads, [&](std::size_t r) {
    auto rng = root.substream(r);
    CountsTable sample = counts;
    for (auto& k : sample.counts)
      k = resampler ? resampler(k, rng) : rng.poisson(static_cast<double>(k));
    if (sample.total() == 0) sample = counts;
    const auto mle = mle_reconstruct(sample, options);
    c[r] = concurrence(mle.rho);
    f[r] = fidelity_to_state(mle.rho, target);
  });
  auto stddev = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
  };
  return {stddev(c), stddev(f)};
}

ReconstructionResult reconstruct(const CountsTable& counts, int mc_runs, std::uint64_t seed, int threads,
                                 const ReconstructionOptions& options) {
  const auto mle = mle_reconstruct(counts, options);
  ReconstructionResult r;
  r.rho = mle.rho;
  r.concurrence = concurrence(mle.rho);
  r.fidelity = fidelity_to_state(mle.rho, TwoQubitState::phi_plus());
  r.fidelity_max_phase = max_bell_phase_fidelity(mle.rho);
  r.log_likelihood = mle.log_likelihood;
  r.converged = mle.converged;
  if (mc_runs >= 2) {
    const auto err = monte_carlo_errors(counts, mc_runs, seed, threads, options);
    r.concurrence_err = err.concurrence_err;
    r.fidelity_err = err.fidelity_err;
  }
  return r;
}

nlohmann::json to_json(const ReconstructionResult& r) {
  return {{"rho", to_json(r.rho)},
          {"concurrence", {{"value", r.concurrence}, {"sigma", r.concurrence_err}}},
          {"fidelity", {{"value", r.fidelity}, {"sigma", r.fidelity_err}}},
          {"fidelity_max_phase", r.fidelity_max_phase},
          {"log_likelihood", r.log_likelihood},
          {"converged", r.converged}};
}

std::array<std::array<std::uint64_t, 3>, 3> count_slot_pairs(std::span<const PhotonEvent> events,
                                                              const TimebinSetup& setup, double window_ps) {
  const double rep = setup.emitter.rep_period_ps;
  const double xx_offset[3] = {0.0, setup.xx_analyzer.delay_ps,
                               setup.state.pump_delay_ps + setup.xx_analyzer.delay_ps};
  const double x_offset[3] = {0.0, setup.x_analyzer.delay_ps, setup.state.pump_delay_ps + setup.x_analyzer.delay_ps};
  const double xx_mean = setup.emitter.tau_xx_ps;
  const double x_mean = setup.emitter.tau_xx_ps + setup.emitter.tau_x_ps;
  auto classify = [&](double t, const double* offsets, double mean) -> int {
    for (int s = 0; s < 3; ++s)
      if (std::abs(t - offsets[s] - mean) <= window_ps) return s;
    return -1;
  };

  std::array<std::array<std::uint64_t, 3>, 3> out{};
  std::size_t i = 0;
  std::array<std::uint64_t, 3> xx_slots{}, x_slots{};
  while (i < events.size()) {
    const auto cycle = static_cast<std::int64_t>(std::floor(static_cast<double>(events[i].timestamp_ps) / rep));
    xx_slots.fill(0);
    x_slots.fill(0);
    for (; i < events.size(); ++i) {
      const double t = static_cast<double>(events[i].timestamp_ps);
      if (static_cast<std::int64_t>(std::floor(t / rep)) != cycle) break;
      const double local = t - static_cast<double>(cycle) * rep;
      if (events[i].channel == kChannelXX) {
        if (int s = classify(local, xx_offset, xx_mean); s >= 0) ++xx_slots[static_cast<std::size_t>(s)];
      } else if (events[i].channel == kChannelX) {
        if (int s = classify(local, x_offset, x_mean); s >= 0) ++x_slots[static_cast<std::size_t>(s)];
      }
    }
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b) out[a][b] += xx_slots[a] * x_slots[b];
  }
  return out;
}

CountsTable tomography_experiment(const TimebinSetup& setup, std::int64_t cycles_per_setting, std::uint64_t seed,
                                  const RunOptions& options, double window_ps) {
  if (cycles_per_setting <= 0) throw std::invalid_argument("tomography_experiment: cycles must be positive");
  CountsTable table;
  table.acquisition_cycles = cycles_per_setting;
  table.efficiency_product = setup.emitter.blinking_on_fraction * setup.emitter.p_emit_pi *
                             setup.xx_detector.efficiency * setup.x_detector.efficiency;
  table.slot_weighted = true;
  table.validate();
  const auto settings = tomography_settings();
  const auto root = CounterRng::from_seed(seed).substream(kSettingStream);
  for (std::size_t s = 0; s < kSettingCount; ++s) {
    TimebinSetup run = setup;
    run.xx_analyzer.phase_rad = analyzer_phase(settings[s].xx);
    run.x_analyzer.phase_rad = analyzer_phase(settings[s].x);
    const auto events = simulate_timebin_run(run, cycles_per_setting, root.substream(s).next_u64(), options);
    const auto pairs = count_slot_pairs(events, run, window_ps);
    table.counts[s] = pairs[slot_of(settings[s].xx)][slot_of(settings[s].x)];
  }
  return table;
}

std::string counts_csv(const CountsTable& counts) {
  std::ostringstream out;
  out << "# acquisition_cycles=" << counts.acquisition_cycles << '\n'
      << "# efficiency_product=" << format_double(counts.efficiency_product) << '\n'
      << "# slot_weighted=" << (counts.slot_weighted ? 1 : 0) << '\n'
      << "xx_proj,x_proj,count\n";
  const auto settings = tomography_settings();
  for (std::size_t s = 0; s < kSettingCount; ++s)
    out << label(settings[s].xx) << ',' << label(settings[s].x) << ',' << counts.counts[s] << '\n';
  return out.str();
}

void write_counts_csv(const std::filesystem::path& path, const CountsTable& counts) {
  write_file_atomic(path, counts_csv(counts));
}

CountsTable parse_counts_csv(std::string_view text, const std::string& source) {
  const auto table = parse_csv(text, {"xx_proj", "x_proj", "count"}, source);
  CountsTable counts;
  counts.acquisition_cycles = static_cast<std::int64_t>(table.meta_number("acquisition_cycles"));
  counts.efficiency_product = table.has_meta("efficiency_product") ? table.meta_number("efficiency_product") : 1.0;
  counts.slot_weighted = table.has_meta("slot_weighted") && table.meta_number("slot_weighted") != 0.0;
  std::array<bool, kSettingCount> seen{};
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto where = source + ": line " + std::to_string(table.line_numbers[r]);
    TomographySetting s;
    try {
      s = {projector_from_label(table.field(r, 0)), projector_from_label(table.field(r, 1))};
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    const auto idx = setting_index(s);
    if (seen[idx]) throw DataError(where + ": duplicate setting");
    seen[idx] = true;
    const auto c = table.integer(r, 2);
    if (c < 0) throw DataError(where + ": negative count");
    counts.counts[idx] = static_cast<std::uint64_t>(c);
  }
  if (std::count(seen.begin(), seen.end(), true) != static_cast<long>(kSettingCount))
    throw DataError(source + ": expected all 16 settings");
  try {
    counts.validate();
  } catch (const DataError& e) {
    throw DataError(source + ": " + e.what());
  }
  return counts;
}

CountsTable read_counts_csv(const std::filesystem::path& path) { return parse_counts_csv(read_file(path), path.string()); }

}  // namespace qdtb
