#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "capint/dist.hpp"

namespace capint::prob {

// Row-stochastic conditional kernel p(out|in), row-major.
class Kernel {
 public:
  Kernel(std::size_t in_size, std::size_t out_size, std::vector<double> row_major);

  static Kernel identity(std::size_t n);
  static Kernel uniform(std::size_t in_size, std::size_t out_size);
  // Correct symbol with probability 1-flip, remaining mass spread uniformly.
  static Kernel symmetric(std::size_t n, double flip);
  // Every row is a point mass on `target` (an uninformative, constant stage).
  static Kernel constant(std::size_t in_size, std::size_t out_size, std::size_t target);
  static Kernel deterministic(std::size_t in_size, std::size_t out_size,
                              std::span<const std::size_t> map);

  std::size_t in_size() const { return in_size_; }
  std::size_t out_size() const { return out_size_; }
  double operator()(std::size_t in, std::size_t out) const {
    return p_[in * out_size_ + out];
  }
  std::span<const double> row(std::size_t in) const {
    return {p_.data() + in * out_size_, out_size_};
  }

  // Composition: this (A->B) followed by next (B->C) gives A->C.
  Kernel then(const Kernel& next) const;
  // Output marginal of src pushed through the kernel.
  Dist push(const Dist& src) const;
  // True when every row is a 0/1 point mass.
  bool has_deterministic_rows() const;

  std::uint64_t content_hash(std::uint64_t h = 0xcbf29ce484222325ull) const;

  nlohmann::json to_json() const;  // row-major matrix
  static Kernel from_json(const nlohmann::json& j);

 private:
  std::size_t in_size_, out_size_;
  std::vector<double> p_;
};

// Joint over (in, out) induced by a source and a kernel.
JointTable joint_from_source_and_kernel(const Dist& src, const Kernel& k,
                                        std::string in_name, std::string out_name);

}  // namespace capint::prob
