#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace bicl {

/// SplitMix64 finalizer; used to derive child seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Seedable, splittable 64-bit random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. Real-valued draws are built from raw bits here rather than with
/// <random> distributions, so streams are reproducible across standard
/// library implementations. split(k) derives an independent child stream from
/// the construction seed and k only, never from the current engine state, so
/// a parallel loop can hand stream k to iteration k regardless of scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }
  Rng split(std::uint64_t stream) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  bool coin() { return (next_u64() >> 63) != 0; }
  /// Standard exponential variate.
  double exponential();
  /// Index drawn from an (unnormalised, nonnegative) weight vector.
  int categorical(std::span<const double> weights);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace bicl
