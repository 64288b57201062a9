#pragma once

#include <cstdint>
#include <span>

namespace capint::rng {

inline constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

// splitmix64 finalizer: full-avalanche 64-bit mix.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Counter-based generator: variate j of stream `base` is mix64(base + (j+1)*kGamma).
// Stateless given (base, counter), so draws can be replayed or parallelized.
class Stream {
 public:
  explicit Stream(std::uint64_t base) : base_(base) {}

  std::uint64_t bits(std::uint64_t counter) const {
    return mix64(base_ + (counter + 1) * kGamma);
  }

  // Uniform in [0,1) with 53 random bits.
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t base_;
};

// Convenience cursor over a Stream.
class Sequence {
 public:
  explicit Sequence(std::uint64_t base) : stream_(base) {}

  double uniform() { return stream_.uniform(next_++); }
  std::uint64_t bits() { return stream_.bits(next_++); }

 private:
  Stream stream_;
  std::uint64_t next_ = 0;
};

// Per-sample stream: seed xor sample index. Sample i of a dataset draws only
// from sample_stream(seed, i), so parallel sampling reproduces serial output.
inline Stream sample_stream(std::uint64_t seed, std::uint64_t index) {
  return Stream(seed ^ index);
}

// Derived seeds for replicates / grid points.
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
  return mix64(seed ^ mix64(tag + kGamma));
}

// Inverse-CDF draw from an (approximately) normalized mass vector.
// Falls back to the last positive atom when u lands on accumulated rounding.
std::size_t categorical(std::span<const double> masses, double u);

}  // namespace capint::rng
