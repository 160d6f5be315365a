#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "qdtb/optics.hpp"
#include "qdtb/rng.hpp"

namespace qdtb {

void DetectorModel::validate() const {
  if (!(efficiency >= 0.0 && efficiency <= 1.0)) throw std::invalid_argument("DetectorModel: efficiency must be in [0, 1]");
  if (!(dark_count_rate_hz >= 0.0) || !(jitter_fwhm_ps >= 0.0) || !(dead_time_ps >= 0.0))
    throw std::invalid_argument("DetectorModel: rates and times must be non-negative");
}

void detect_photon(std::vector<PhotonEvent>& out, int channel, double arrival_ps, const DetectorModel& detector,
                   CounterRng& rng) {
  if (!rng.bernoulli(detector.efficiency)) return;
  const double sigma = detector.jitter_sigma_ps();
  const double t = sigma > 0.0 ? arrival_ps + rng.normal(0.0, sigma) : arrival_ps;
  if (t < 0.0) return;
  out.push_back({channel, std::llround(t)});
}

void add_dark_counts(std::vector<PhotonEvent>& out, int channel, double t0_ps, double t1_ps,
                     const DetectorModel& detector, CounterRng& rng) {
  if (detector.dark_count_rate_hz <= 0.0 || t1_ps <= t0_ps) return;
  const auto n = rng.poisson(detector.dark_count_rate_hz * (t1_ps - t0_ps) * 1e-12);
  for (std::uint64_t i = 0; i < n; ++i) out.push_back({channel, std::llround(t0_ps + rng.uniform() * (t1_ps - t0_ps))});
}

std::vector<PhotonEvent> finalize_events(std::vector<std::vector<PhotonEvent>>&& parts,
                                         std::span<const DetectorModel> detectors) {
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  std::vector<PhotonEvent> events;
  events.reserve(total);
  for (auto& p : parts) {
    events.insert(events.end(), p.begin(), p.end());
    std::vector<PhotonEvent>().swap(p);
  }
  std::sort(events.begin(), events.end());

  bool any_dead_time = false;
  for (const auto& d : detectors) any_dead_time |= d.dead_time_ps > 0.0;
  if (!any_dead_time) return events;

  std::vector<std::int64_t> last(detectors.size(), std::numeric_limits<std::int64_t>::min());
  std::vector<PhotonEvent> kept;
  kept.reserve(events.size());
  for (const auto& e : events) {
    const auto ch = static_cast<std::size_t>(e.channel);
    if (ch < detectors.size()) {
      const double dead = detectors[ch].dead_time_ps;
      if (last[ch] != std::numeric_limits<std::int64_t>::min() &&
          static_cast<double>(e.timestamp_ps - last[ch]) < dead)
        continue;
      last[ch] = e.timestamp_ps;
    }
    kept.push_back(e);
  }
  return kept;
}

}  // namespace qdtb
