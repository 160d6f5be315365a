#include "qdtb/cascade.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "qdtb/io.hpp"
#include "qdtb/parallel.hpp"
#include "qdtb/rng.hpp"

namespace qdtb {
namespace {

constexpr std::uint64_t kTelegraphStream = 0x7e1e;
constexpr std::uint64_t kEmissionStream = 0xe3155;

}  // namespace

void EmitterParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string("EmitterParams: ") + name + " must be positive");
  };
  positive(tau_xx_ps, "tau_xx_ps");
  positive(tau_x_ps, "tau_x_ps");
  positive(rep_period_ps, "rep_period_ps");
  positive(blinking_mean_on_cycles, "blinking_mean_on_cycles");
  if (!(blinking_on_fraction > 0.0 && blinking_on_fraction <= 1.0))
    throw std::invalid_argument("EmitterParams: blinking_on_fraction must be in (0, 1]");
  if (!(p_emit_pi > 0.0 && p_emit_pi <= 1.0)) throw std::invalid_argument("EmitterParams: p_emit_pi must be in (0, 1]");
  if (!(two_pair_prob >= 0.0 && two_pair_prob < 1.0))
    throw std::invalid_argument("EmitterParams: two_pair_prob must be in [0, 1)");
  if (two_pair_prob > 0.1 * p_emit_pi)
    throw std::invalid_argument("EmitterParams: two_pair_prob must be much smaller than p_emit_pi");
  if (blinking_on_fraction < 1.0 &&
      blinking_on_fraction / (1.0 - blinking_on_fraction) / blinking_mean_on_cycles > 1.0)
    throw std::invalid_argument("EmitterParams: blinking_mean_on_cycles too short for the requested ON fraction");
}

PulseTrain PulseTrain::single(double area_rad) { return {{0.0}, {area_rad}, {0.0}}; }

PulseTrain PulseTrain::pair(double delay_ps, double area_rad, double phase_rad) {
  return {{0.0, delay_ps}, {area_rad, area_rad}, {0.0, phase_rad}};
}

void PulseTrain::validate() const {
  if (areas_rad.size() != times_ps.size() || phases_rad.size() != times_ps.size())
    throw std::invalid_argument("PulseTrain: times, areas and phases must have equal length");
  for (std::size_t i = 1; i < times_ps.size(); ++i)
    if (!(times_ps[i] > times_ps[i - 1])) throw std::invalid_argument("PulseTrain: pulse times must increase strictly");
  for (double a : areas_rad)
    if (!(a >= 0.0)) throw std::invalid_argument("PulseTrain: pulse areas must be non-negative");
}

const char* to_string(TimeBin bin) noexcept {
  switch (bin) {
    case TimeBin::kEarly: return "early";
    case TimeBin::kLate: return "late";
    case TimeBin::kNone: break;
  }
  return "none";
}

double two_photon_rabi_population(double area_rad, double damping) {
  if (!(area_rad >= 0.0)) throw std::invalid_argument("two_photon_rabi_population: area must be non-negative");
  const double s = std::sin(0.5 * area_rad);
  return damping * s * s;
}

std::vector<std::uint8_t> blinking_telegraph(double on_fraction, double mean_on_cycles, std::int64_t cycles,
                                             std::uint64_t seed) {
  if (!(on_fraction > 0.0 && on_fraction <= 1.0))
    throw std::invalid_argument("blinking_telegraph: on_fraction must be in (0, 1]");
  if (!(mean_on_cycles >= 1.0)) throw std::invalid_argument("blinking_telegraph: mean ON duration must be >= 1 cycle");
  std::vector<std::uint8_t> state(static_cast<std::size_t>(std::max<std::int64_t>(cycles, 0)), 1);
  if (on_fraction == 1.0 || state.empty()) return state;

  const double p_off = 1.0 / mean_on_cycles;                           // ON -> OFF
  const double p_on = on_fraction / (1.0 - on_fraction) * p_off;        // OFF -> ON
  if (p_on > 1.0) throw std::invalid_argument("blinking_telegraph: mean ON duration too short for this ON fraction");
  auto rng = CounterRng::from_seed(seed).substream(kTelegraphStream);
  bool on = rng.bernoulli(on_fraction);
  state[0] = on;
  for (std::size_t i = 1; i < state.size(); ++i) {
    on = on ? !rng.bernoulli(p_off) : rng.bernoulli(p_on);
    state[i] = on;
  }
  return state;
}

double telegraph_on_persistence(double on_fraction, double mean_on_cycles, std::int64_t lag) {
  if (on_fraction >= 1.0) return 1.0;
  const double p_off = 1.0 / mean_on_cycles;
  const double p_on = on_fraction / (1.0 - on_fraction) * p_off;
  const double lambda = 1.0 - p_on - p_off;
  return on_fraction + (1.0 - on_fraction) * std::pow(lambda, static_cast<double>(lag));
}

std::vector<EmissionRecord> sample_pair_emission(const EmitterParams& params, const PulseTrain& train,
                                                 std::int64_t cycles, std::uint64_t seed,
                                                 const SamplingOptions& options) {
  params.validate();
  train.validate();
  if (train.empty() || cycles <= 0) return {};

  const auto telegraph =
      blinking_telegraph(params.blinking_on_fraction, params.blinking_mean_on_cycles, cycles, seed);
  std::vector<double> excite(train.times_ps.size());
  for (std::size_t i = 0; i < excite.size(); ++i)
    excite[i] = two_photon_rabi_population(train.areas_rad[i], params.p_emit_pi);
  const bool two_pulses = train.times_ps.size() > 1;
  auto label = [&](std::size_t pulse) {
    if (!two_pulses) return TimeBin::kEarly;
    return pulse == 0 ? TimeBin::kEarly : TimeBin::kLate;
  };

  const std::int64_t block = std::max<std::int64_t>(options.block_cycles, 1);
  const std::size_t n_blocks = static_cast<std::size_t>((cycles + block - 1) / block);
  std::vector<std::vector<EmissionRecord>> parts(n_blocks);
  const auto root = CounterRng::from_seed(seed).substream(kEmissionStream);

  parallel_for(n_blocks, options.threads, [&](std::size_t b) {
    auto rng = root.substream(b);
    auto& out = parts[b];
    const std::int64_t begin = static_cast<std::int64_t>(b) * block;
    const std::int64_t end = std::min(cycles, begin + block);
    auto emit = [&](std::int64_t cycle, std::size_t pulse) {
      EmissionRecord r;
      r.cycle = cycle;
      r.t_xx_ps = train.times_ps[pulse] + rng.exponential(params.tau_xx_ps);
      r.t_x_ps = r.t_xx_ps + rng.exponential(params.tau_x_ps);
      r.excited_by = label(pulse);
      r.phase_rad = train.phases_rad[pulse];
      out.push_back(r);
    };
    for (std::int64_t c = begin; c < end; ++c) {
      if (!telegraph[static_cast<std::size_t>(c)]) continue;
      for (std::size_t p = 0; p < excite.size(); ++p) {
        if (rng.bernoulli(excite[p])) {
          emit(c, p);
          break;
        }
      }
      if (params.two_pair_prob > 0.0 && rng.bernoulli(params.two_pair_prob)) {
        const std::size_t p =
            excite.size() == 1 ? 0 : std::min(excite.size() - 1, static_cast<std::size_t>(rng.uniform() * excite.size()));
        emit(c, p);
      }
    }
  });

  std::vector<EmissionRecord> records;
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  records.reserve(total);
  for (auto& p : parts) records.insert(records.end(), p.begin(), p.end());
  return records;
}

double two_pair_prob_for_g2(double g2, double p_emit, double on_fraction) {
  if (!(g2 >= 0.0) || !(p_emit > 0.0) || !(on_fraction > 0.0))
    throw std::invalid_argument("two_pair_prob_for_g2: invalid arguments");
  if (g2 == 0.0) return 0.0;
  // g2 f (p + q)^2 = 2 p q  ->  g f q^2 + (2 g f p - 2 p) q + g f p^2 = 0; take the small root.
  const double a = g2 * on_fraction;
  const double b = 2.0 * g2 * on_fraction * p_emit - 2.0 * p_emit;
  const double c = g2 * on_fraction * p_emit * p_emit;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) throw std::invalid_argument("two_pair_prob_for_g2: target g2 not reachable");
  return (-b - std::sqrt(disc)) / (2.0 * a);
}

void write_emission_csv(const std::filesystem::path& path, std::span<const EmissionRecord> records) {
  std::ostringstream out;
  out << "cycle,t_xx_ps,t_x_ps,bin_label,phase_rad\n";
  for (const auto& r : records)
    out << r.cycle << ',' << format_double(r.t_xx_ps) << ',' << format_double(r.t_x_ps) << ',' << to_string(r.excited_by)
        << ',' << format_double(r.phase_rad) << '\n';
  write_file_atomic(path, out.str());
}

}  // namespace qdtb
