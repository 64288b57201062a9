#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "capint/errors.hpp"

namespace capint::prob {

inline constexpr double kMassTol = 1e-12;       // |sum - 1| tolerance for distributions
inline constexpr double kNegClamp = -1e-12;     // float-noise clamp for information values
inline constexpr std::size_t kMaxAxisSize = 64;
inline constexpr std::size_t kMaxJointCells = 10'000'000;

// Values in [kNegClamp, 0) are rounding noise and clamp to 0; anything below
// kNegClamp signals a bug and throws.
double clamp_information(double v);

// Finite probability distribution. All information quantities are in nats.
class Dist {
 public:
  explicit Dist(std::vector<double> masses);

  static Dist uniform(std::size_t n);
  static Dist point_mass(std::size_t n, std::size_t at);

  std::size_t size() const { return masses_.size(); }
  double operator[](std::size_t i) const { return masses_[i]; }
  std::span<const double> masses() const { return masses_; }

 private:
  std::vector<double> masses_;
};

}  // namespace capint::prob
