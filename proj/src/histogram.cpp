#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "qdtb/error.hpp"
#include "qdtb/io.hpp"
#include "qdtb/optics.hpp"

namespace qdtb {

CoincidenceHistogram::CoincidenceHistogram(double bin_width_ps, double origin_ps, std::size_t bins)
    : bin_width_(bin_width_ps), origin_(origin_ps), counts_(bins, 0) {
  if (!(bin_width_ps > 0.0) || !std::isfinite(bin_width_ps))
    throw std::invalid_argument("CoincidenceHistogram: bin width must be positive");
  if (!std::isfinite(origin_ps)) throw std::invalid_argument("CoincidenceHistogram: origin must be finite");
}

CoincidenceHistogram CoincidenceHistogram::symmetric(double bin_width_ps, double range_ps) {
  if (!(range_ps > 0.0)) throw std::invalid_argument("CoincidenceHistogram: range must be positive");
  const auto bins = static_cast<std::size_t>(std::ceil(2.0 * range_ps / bin_width_ps - 1e-9));
  return CoincidenceHistogram(bin_width_ps, -range_ps, bins);
}

std::uint64_t CoincidenceHistogram::total() const noexcept {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

bool CoincidenceHistogram::add(double delay_ps, std::uint64_t n) {
  const double x = (delay_ps - origin_) / bin_width_;
  if (!(x >= 0.0)) return false;
  const auto i = static_cast<std::size_t>(x);
  if (i >= counts_.size()) return false;
  counts_[i] += n;
  return true;
}

std::uint64_t CoincidenceHistogram::window_sum(double lo, double hi) const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    const double c = bin_center(i);
    if (c >= lo && c < hi) s += counts_[i];
  }
  return s;
}

std::size_t CoincidenceHistogram::window_bins(double lo, double hi) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    const double c = bin_center(i);
    if (c >= lo && c < hi) ++n;
  }
  return n;
}

void CoincidenceHistogram::merge(const CoincidenceHistogram& other) {
  if (other.bin_width_ != bin_width_ || other.origin_ != origin_ || other.counts_.size() != counts_.size())
    throw std::invalid_argument("CoincidenceHistogram::merge: binning differs");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

CoincidenceHistogram histogram_events(std::span<const PhotonEvent> events, int start_channel, int stop_channel,
                                      double bin_width_ps, double range_ps) {
  auto hist = CoincidenceHistogram::symmetric(bin_width_ps, range_ps);
  std::vector<std::int64_t> starts, stops;
  std::vector<std::size_t> start_idx, stop_idx;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].channel == start_channel) {
      starts.push_back(events[i].timestamp_ps);
      start_idx.push_back(i);
    }
    if (events[i].channel == stop_channel) {
      stops.push_back(events[i].timestamp_ps);
      stop_idx.push_back(i);
    }
  }
  // Unsorted input is sorted first.
  if (!std::is_sorted(starts.begin(), starts.end()) || !std::is_sorted(stops.begin(), stops.end())) {
    std::vector<PhotonEvent> sorted(events.begin(), events.end());
    std::sort(sorted.begin(), sorted.end());
    return histogram_events(sorted, start_channel, stop_channel, bin_width_ps, range_ps);
  }
  const bool same = start_channel == stop_channel;
  std::size_t lo = 0;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    const double t0 = static_cast<double>(starts[s]);
    while (lo < stops.size() && static_cast<double>(stops[lo]) < t0 - range_ps) ++lo;
    for (std::size_t k = lo; k < stops.size(); ++k) {
      const double d = static_cast<double>(stops[k]) - t0;
      if (d >= range_ps) break;
      if (same && stop_idx[k] == start_idx[s]) continue;
      hist.add(d);
    }
  }
  return hist;
}

CoincidenceHistogram decay_histogram(std::span<const PhotonEvent> events, int channel, double rep_period_ps,
                                     double bin_width_ps, double lo_ps, double hi_ps) {
  if (!(hi_ps > lo_ps) || hi_ps - lo_ps > rep_period_ps)
    throw std::invalid_argument("decay_histogram: window must be non-empty and shorter than one period");
  const auto bins = static_cast<std::size_t>(std::ceil((hi_ps - lo_ps) / bin_width_ps - 1e-9));
  CoincidenceHistogram hist(bin_width_ps, lo_ps, bins);
  for (const auto& e : events) {
    if (e.channel != channel) continue;
    const double t = static_cast<double>(e.timestamp_ps);
    const double cycle = std::floor((t - lo_ps) / rep_period_ps);
    const double rel = t - cycle * rep_period_ps;
    if (rel < hi_ps) hist.add(rel);
  }
  return hist;
}

void write_events_csv(const std::filesystem::path& path, std::span<const PhotonEvent> events) {
  std::string out = "channel,timestamp_ps\n";
  out.reserve(events.size() * 16 + out.size());
  for (const auto& e : events) {
    out += std::to_string(e.channel);
    out += ',';
    out += std::to_string(e.timestamp_ps);
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<PhotonEvent> read_events_csv(const std::filesystem::path& path) {
  const auto table = read_csv(path, {"channel", "timestamp_ps"});
  std::vector<PhotonEvent> events;
  events.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto ch = table.integer(r, 0);
    const auto t = table.integer(r, 1);
    if (t < 0) throw DataError(table.source + ": line " + std::to_string(table.line_numbers[r]) + ": negative timestamp");
    if (!events.empty() && t < events.back().timestamp_ps)
      throw DataError(table.source + ": line " + std::to_string(table.line_numbers[r]) + ": timestamps not sorted");
    events.push_back({static_cast<int>(ch), t});
  }
  return events;
}

std::string histogram_csv(const CoincidenceHistogram& hist,
                          const std::vector<std::pair<std::string, std::string>>& extra_meta) {
  std::ostringstream out;
  out << "# bin_width_ps=" << format_double(hist.bin_width()) << '\n';
  for (const auto& [k, v] : extra_meta) out << "# " << k << '=' << v << '\n';
  out << "delay_ps,counts\n";
  for (std::size_t i = 0; i < hist.size(); ++i) out << format_double(hist.bin_left(i)) << ',' << hist.counts()[i] << '\n';
  return out.str();
}

void write_histogram_csv(const std::filesystem::path& path, const CoincidenceHistogram& hist,
                         const std::vector<std::pair<std::string, std::string>>& extra_meta) {
  write_file_atomic(path, histogram_csv(hist, extra_meta));
}

CoincidenceHistogram parse_histogram_csv(std::string_view text, const std::string& source) {
  const auto table = parse_csv(text, {"delay_ps", "counts"}, source);
  const double width = table.meta_number("bin_width_ps");
  if (!(width > 0.0)) throw DataError(source + ": bin_width_ps must be positive");
  if (table.rows.empty()) throw DataError(source + ": histogram has no rows");
  const double origin = table.number(0, 0);
  CoincidenceHistogram hist(width, origin, table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const double left = table.number(r, 0);
    if (std::abs(left - hist.bin_left(r)) > 1e-6 * std::max(1.0, std::abs(left)))
      throw DataError(source + ": line " + std::to_string(table.line_numbers[r]) + ": bins are not contiguous");
    const auto c = table.integer(r, 1);
    if (c < 0) throw DataError(source + ": line " + std::to_string(table.line_numbers[r]) + ": negative count");
    hist.set(r, static_cast<std::uint64_t>(c));
  }
  return hist;
}

CoincidenceHistogram read_histogram_csv(const std::filesystem::path& path) {
  return parse_histogram_csv(read_file(path), path.string());
}

}  // namespace qdtb
