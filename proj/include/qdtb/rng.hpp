#pragma once

// Counter-based 64-bit generator shared by every stochastic component.
//
// Algorithm (written out so that other implementations can agree bit-exactly):
//
//   mix64(z):  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//              z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//              return z ^ (z >> 31)
//
//   draw n (n = 1, 2, ...) of a stream with key K:
//              mix64(K + n * 0x9E3779B97F4A7C15)          (mod 2^64)
//
//   key of substream i of a parent key K:
//              mix64(K ^ mix64(i * 0xD1B54A32D192ED03 + 0x8CB92BA72F3D8DD7))
//
//   root key of a run with seed s:  mix64(s)
//
// Distributions are derived from draws only through the functions below so
// their consumption of the counter is part of the contract.

#include <cmath>
#include <cstdint>
#include <span>

namespace qdtb {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class CounterRng {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

  /// Root stream of a run.
  static constexpr CounterRng from_seed(std::uint64_t seed) noexcept { return CounterRng(mix64(seed)); }

  /// Independent child stream. Children of distinct indices never share draws
  /// with each other or with the parent in any practical sense.
  [[nodiscard]] constexpr CounterRng substream(std::uint64_t index) const noexcept {
    return CounterRng(key_ ^ mix64(index * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
  }

  constexpr std::uint64_t next_u64() noexcept { return mix64(key_ + kGamma * ++counter_); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  /// Uniform on (0, 1].
  double uniform_open() noexcept { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  double exponential(double mean) noexcept { return -mean * std::log(uniform_open()); }

  /// Box-Muller, cosine branch only: two draws per call.
  double normal(double mean, double sigma) noexcept;

  /// Knuth multiplication below mean 10, Hormann PTRS rejection above.
  std::uint64_t poisson(double mean) noexcept;

  /// Index drawn with probability proportional to weights (one draw).
  std::size_t categorical(std::span<const double> cumulative) noexcept;

  [[nodiscard]] constexpr std::uint64_t key() const noexcept { return key_; }
  [[nodiscard]] constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace qdtb
