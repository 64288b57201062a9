#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "capint/dist.hpp"

namespace capint::prob {

struct Axis {
  std::string name;
  std::size_t size = 0;
};

// Dense joint distribution over named finite axes, row-major with the last
// axis fastest. Axis sizes are capped at kMaxAxisSize and total cells at
// kMaxJointCells.
class JointTable {
 public:
  JointTable(std::vector<Axis> axes, std::vector<double> masses);

  std::size_t rank() const { return axes_.size(); }
  const std::vector<Axis>& axes() const { return axes_; }
  std::size_t cells() const { return masses_.size(); }
  std::span<const double> masses() const { return masses_; }

  std::size_t axis_index(std::string_view name) const;  // throws on unknown name
  std::size_t axis_size(std::string_view name) const;

  double mass(std::span<const std::size_t> index) const;

  // Marginal over the listed axes, in the listed order.
  JointTable marginal(std::span<const std::string_view> keep) const;
  JointTable marginal(std::initializer_list<std::string_view> keep) const;
  Dist marginal_dist(std::string_view axis) const;

  // {"axes":[{"name","size"},...],"masses":[flat row-major]}
  nlohmann::json to_json() const;
  static JointTable from_json(const nlohmann::json& j);

 private:
  std::vector<Axis> axes_;
  std::vector<double> masses_;
  std::vector<std::size_t> strides_;
};

}  // namespace capint::prob
