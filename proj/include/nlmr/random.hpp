#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace nlmr {

// Platform-independent random helpers. std::mt19937_64 is fully specified by
// the standard, but the std distributions are not, so everything drawn from
// the engine goes through the functions below.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t NextU64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double Uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  /// Uniform integer in [0, n). Unbiased (rejection on the top range).
  std::uint64_t Below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller (one value per call).
  double Normal();

  template <typename T>
  void Shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[Below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer; used to derive independent per-lane seeds.
std::uint64_t MixSeed(std::uint64_t seed, std::uint64_t lane);

/// Index drawn from an unnormalized nonnegative weight vector.
std::size_t SampleIndex(Rng& rng, std::span<const double> weights);

}  // namespace nlmr
