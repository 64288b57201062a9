#include "capint/info.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

#include "capint/rng.hpp"

namespace capint::prob {

namespace {

double plogp(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

void check_masses(std::span<const double> masses, const char* what) {
  if (masses.empty()) {
    throw validation_error(std::string(what) + ": empty mass vector");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    const double m = masses[i];
    if (!(m >= 0.0)) {
      throw validation_error(std::string(what) + ": negative or NaN mass at index " +
                             std::to_string(i));
    }
    sum += m;
  }
  if (std::abs(sum - 1.0) > kMassTol) {
    throw validation_error(std::string(what) + ": masses sum to " + std::to_string(sum) +
                           ", not 1 within 1e-12");
  }
}

// Entropy of a raw nonnegative mass vector (need not be normalized to 1;
// callers pass normalized data).
double entropy_span(std::span<const double> masses) {
  double h = 0.0;
  for (double m : masses) h -= plogp(m);
  return h;
}

// I(A;B) over a dense rows x cols joint slice (normalized).
double mi_table(std::span<const double> p, std::size_t rows, std::size_t cols) {
  std::vector<double> pa(rows, 0.0), pb(cols, 0.0);
  for (std::size_t a = 0; a < rows; ++a) {
    for (std::size_t b = 0; b < cols; ++b) {
      const double m = p[a * cols + b];
      pa[a] += m;
      pb[b] += m;
    }
  }
  const double h = entropy_span(pa) + entropy_span(pb) - entropy_span(p);
  return clamp_information(h);
}

}  // namespace

double clamp_information(double v) {
  if (v >= 0.0) return v;
  if (v >= kNegClamp) return 0.0;
  throw domain_error("information quantity " + std::to_string(v) +
                     " below -1e-12; implementation bug, not rounding noise");
}

Dist::Dist(std::vector<double> masses) : masses_(std::move(masses)) {
  check_masses(masses_, "Dist");
}

Dist Dist::uniform(std::size_t n) {
  if (n == 0) throw validation_error("Dist::uniform: n must be >= 1");
  return Dist(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

Dist Dist::point_mass(std::size_t n, std::size_t at) {
  if (at >= n) throw validation_error("Dist::point_mass: atom out of range");
  std::vector<double> m(n, 0.0);
  m[at] = 1.0;
  return Dist(std::move(m));
}

JointTable::JointTable(std::vector<Axis> axes, std::vector<double> masses)
    : axes_(std::move(axes)), masses_(std::move(masses)) {
  if (axes_.empty()) throw validation_error("JointTable: no axes");
  std::size_t cells = 1;
  for (const Axis& ax : axes_) {
    if (ax.size == 0) throw validation_error("JointTable: axis '" + ax.name + "' has size 0");
    if (ax.size > kMaxAxisSize) {
      throw resource_limit_error("JointTable: axis '" + ax.name + "' has size " +
                                 std::to_string(ax.size) + " > desk-scale cap " +
                                 std::to_string(kMaxAxisSize));
    }
    if (cells > kMaxJointCells / ax.size) {
      throw resource_limit_error("JointTable: total cells exceed desk-scale cap 1e7");
    }
    cells *= ax.size;
  }
  if (masses_.size() != cells) {
    throw validation_error("JointTable: mass vector has " + std::to_string(masses_.size()) +
                           " cells, axes imply " + std::to_string(cells));
  }
  check_masses(masses_, "JointTable");
  strides_.assign(axes_.size(), 1);
  for (std::size_t i = axes_.size(); i-- > 1;) {
    strides_[i - 1] = strides_[i] * axes_[i].size;
  }
}

std::size_t JointTable::axis_index(std::string_view name) const {
  for (std::size_t i = 0; i < axes_.size(); ++i) {
    if (axes_[i].name == name) return i;
  }
  throw validation_error("JointTable: unknown axis '" + std::string(name) + "'");
}

std::size_t JointTable::axis_size(std::string_view name) const {
  return axes_[axis_index(name)].size;
}

double JointTable::mass(std::span<const std::size_t> index) const {
  if (index.size() != axes_.size()) throw validation_error("JointTable::mass: rank mismatch");
  std::size_t flat = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= axes_[i].size) throw validation_error("JointTable::mass: index out of range");
    flat += index[i] * strides_[i];
  }
  return masses_[flat];
}

JointTable JointTable::marginal(std::span<const std::string_view> keep) const {
  if (keep.empty()) throw validation_error("JointTable::marginal: no axes to keep");
  std::vector<std::size_t> keep_idx;
  std::vector<Axis> out_axes;
  for (std::string_view name : keep) {
    const std::size_t idx = axis_index(name);
    if (std::find(keep_idx.begin(), keep_idx.end(), idx) != keep_idx.end()) {
      throw validation_error("JointTable::marginal: duplicate axis '" + std::string(name) + "'");
    }
    keep_idx.push_back(idx);
    out_axes.push_back(axes_[idx]);
  }
  std::vector<std::size_t> out_strides(keep_idx.size(), 1);
  for (std::size_t i = keep_idx.size(); i-- > 1;) {
    out_strides[i - 1] = out_strides[i] * out_axes[i].size;
  }
  std::size_t out_cells = out_strides[0] * out_axes[0].size;
  std::vector<double> out(out_cells, 0.0);

  std::vector<std::size_t> idx(axes_.size(), 0);
  for (std::size_t flat = 0; flat < masses_.size(); ++flat) {
    std::size_t out_flat = 0;
    for (std::size_t k = 0; k < keep_idx.size(); ++k) {
      out_flat += idx[keep_idx[k]] * out_strides[k];
    }
    out[out_flat] += masses_[flat];
    for (std::size_t ax = axes_.size(); ax-- > 0;) {
      if (++idx[ax] < axes_[ax].size) break;
      idx[ax] = 0;
    }
  }
  return JointTable(std::move(out_axes), std::move(out));
}

JointTable JointTable::marginal(std::initializer_list<std::string_view> keep) const {
  return marginal(std::span<const std::string_view>(keep.begin(), keep.size()));
}

Dist JointTable::marginal_dist(std::string_view axis) const {
  const std::string_view names[] = {axis};
  JointTable m = marginal(std::span<const std::string_view>(names, 1));
  return Dist(std::vector<double>(m.masses().begin(), m.masses().end()));
}

nlohmann::json JointTable::to_json() const {
  nlohmann::json axes = nlohmann::json::array();
  for (const Axis& ax : axes_) {
    axes.push_back({{"name", ax.name}, {"size", ax.size}});
  }
  return {{"axes", axes}, {"masses", masses_}};
}

JointTable JointTable::from_json(const nlohmann::json& j) {
  std::vector<Axis> axes;
  for (const auto& ax : j.at("axes")) {
    axes.push_back({ax.at("name").get<std::string>(), ax.at("size").get<std::size_t>()});
  }
  return JointTable(std::move(axes), j.at("masses").get<std::vector<double>>());
}

Kernel::Kernel(std::size_t in_size, std::size_t out_size, std::vector<double> row_major)
    : in_size_(in_size), out_size_(out_size), p_(std::move(row_major)) {
  if (in_size_ == 0 || out_size_ == 0) throw validation_error("Kernel: empty alphabet");
  if (p_.size() != in_size_ * out_size_) {
    throw validation_error("Kernel: matrix size mismatch");
  }
  for (std::size_t r = 0; r < in_size_; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < out_size_; ++c) {
      const double v = p_[r * out_size_ + c];
      if (!(v >= 0.0)) {
        throw validation_error("Kernel: negative or NaN entry in row " + std::to_string(r));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kMassTol) {
      throw validation_error("Kernel: row " + std::to_string(r) + " sums to " +
                             std::to_string(sum) + ", not 1 within 1e-12");
    }
  }
}

Kernel Kernel::identity(std::size_t n) {
  std::vector<double> p(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) p[i * n + i] = 1.0;
  return Kernel(n, n, std::move(p));
}

Kernel Kernel::uniform(std::size_t in_size, std::size_t out_size) {
  return Kernel(in_size, out_size,
                std::vector<double>(in_size * out_size, 1.0 / static_cast<double>(out_size)));
}

Kernel Kernel::symmetric(std::size_t n, double flip) {
  if (n < 2) throw validation_error("Kernel::symmetric: need n >= 2");
  if (!(flip >= 0.0 && flip <= 1.0)) throw validation_error("Kernel::symmetric: flip in [0,1]");
  std::vector<double> p(n * n, flip / static_cast<double>(n - 1));
  for (std::size_t i = 0; i < n; ++i) p[i * n + i] = 1.0 - flip;
  return Kernel(n, n, std::move(p));
}

Kernel Kernel::constant(std::size_t in_size, std::size_t out_size, std::size_t target) {
  if (target >= out_size) throw validation_error("Kernel::constant: target out of range");
  std::vector<double> p(in_size * out_size, 0.0);
  for (std::size_t i = 0; i < in_size; ++i) p[i * out_size + target] = 1.0;
  return Kernel(in_size, out_size, std::move(p));
}

Kernel Kernel::deterministic(std::size_t in_size, std::size_t out_size,
                             std::span<const std::size_t> map) {
  if (map.size() != in_size) throw validation_error("Kernel::deterministic: map size mismatch");
  std::vector<double> p(in_size * out_size, 0.0);
  for (std::size_t i = 0; i < in_size; ++i) {
    if (map[i] >= out_size) throw validation_error("Kernel::deterministic: map value out of range");
    p[i * out_size + map[i]] = 1.0;
  }
  return Kernel(in_size, out_size, std::move(p));
}

Kernel Kernel::then(const Kernel& next) const {
  if (next.in_size_ != out_size_) {
    throw validation_error("Kernel::then: inner alphabet mismatch");
  }
  std::vector<double> p(in_size_ * next.out_size_, 0.0);
  for (std::size_t a = 0; a < in_size_; ++a) {
    for (std::size_t b = 0; b < out_size_; ++b) {
      const double pab = p_[a * out_size_ + b];
      if (pab == 0.0) continue;
      for (std::size_t c = 0; c < next.out_size_; ++c) {
        p[a * next.out_size_ + c] += pab * next.p_[b * next.out_size_ + c];
      }
    }
  }
  return Kernel(in_size_, next.out_size_, std::move(p));
}

Dist Kernel::push(const Dist& src) const {
  if (src.size() != in_size_) throw validation_error("Kernel::push: source size mismatch");
  std::vector<double> out(out_size_, 0.0);
  for (std::size_t a = 0; a < in_size_; ++a) {
    const double pa = src[a];
    if (pa == 0.0) continue;
    for (std::size_t b = 0; b < out_size_; ++b) out[b] += pa * p_[a * out_size_ + b];
  }
  // Renormalize accumulated rounding so downstream validation stays happy.
  double sum = std::accumulate(out.begin(), out.end(), 0.0);
  for (double& v : out) v /= sum;
  return Dist(std::move(out));
}

bool Kernel::has_deterministic_rows() const {
  for (std::size_t r = 0; r < in_size_; ++r) {
    for (std::size_t c = 0; c < out_size_; ++c) {
      const double v = p_[r * out_size_ + c];
      if (v != 0.0 && v != 1.0) return false;
    }
  }
  return true;
}

std::uint64_t Kernel::content_hash(std::uint64_t h) const {
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ull;  // FNV-1a prime
  };
  mix(in_size_);
  mix(out_size_);
  for (double v : p_) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    mix(bits);
  }
  return h;
}

nlohmann::json Kernel::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < in_size_; ++r) {
    rows.push_back(std::vector<double>(row(r).begin(), row(r).end()));
  }
  return rows;
}

Kernel Kernel::from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw validation_error("Kernel::from_json: expected matrix");
  const std::size_t rows = j.size();
  const std::size_t cols = j.at(0).size();
  std::vector<double> p;
  p.reserve(rows * cols);
  for (const auto& row : j) {
    if (row.size() != cols) throw validation_error("Kernel::from_json: ragged matrix");
    for (const auto& v : row) p.push_back(v.get<double>());
  }
  return Kernel(rows, cols, std::move(p));
}

JointTable joint_from_source_and_kernel(const Dist& src, const Kernel& k,
                                        std::string in_name, std::string out_name) {
  if (src.size() != k.in_size()) {
    throw validation_error("joint_from_source_and_kernel: source size mismatch");
  }
  std::vector<double> m(src.size() * k.out_size());
  for (std::size_t a = 0; a < src.size(); ++a) {
    for (std::size_t b = 0; b < k.out_size(); ++b) {
      m[a * k.out_size() + b] = src[a] * k(a, b);
    }
  }
  return JointTable({{std::move(in_name), src.size()}, {std::move(out_name), k.out_size()}},
                    std::move(m));
}

double entropy(const Dist& d) {
  return clamp_information(entropy_span(d.masses()));
}

double kl_divergence(const Dist& p, const Dist& q) {
  if (p.size() != q.size()) {
    throw validation_error("kl_divergence: alphabet sizes differ");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) {
      throw domain_error("kl_divergence: absolute continuity fails at atom " + std::to_string(i));
    }
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return clamp_information(kl);
}

double mutual_information(const JointTable& j, std::string_view a, std::string_view b) {
  const std::string_view ga[] = {a}, gb[] = {b};
  return mutual_information_grouped(j, {ga, 1}, {gb, 1});
}

double mutual_information_grouped(const JointTable& j,
                                  std::span<const std::string_view> group_a,
                                  std::span<const std::string_view> group_b) {
  std::vector<std::string_view> keep(group_a.begin(), group_a.end());
  keep.insert(keep.end(), group_b.begin(), group_b.end());
  JointTable m = j.marginal(keep);
  std::size_t rows = 1, cols = 1;
  for (std::size_t i = 0; i < group_a.size(); ++i) rows *= m.axes()[i].size;
  for (std::size_t i = group_a.size(); i < keep.size(); ++i) cols *= m.axes()[i].size;
  return mi_table(m.masses(), rows, cols);
}

ConditionalMiResult conditional_mi(const JointTable& j, std::string_view a,
                                   std::string_view b, std::string_view given) {
  if (j.rank() < 3) {
    throw validation_error("conditional_mi: need a joint over at least 3 axes");
  }
  const std::string_view keep[] = {a, b, given};
  JointTable m = j.marginal(std::span<const std::string_view>(keep, 3));
  const std::size_t na = m.axes()[0].size;
  const std::size_t nb = m.axes()[1].size;
  const std::size_t nc = m.axes()[2].size;
  std::span<const double> masses = m.masses();

  ConditionalMiResult res;
  res.weights.assign(nc, 0.0);
  res.per_context.assign(nc, 0.0);
  std::vector<double> slice(na * nb);
  for (std::size_t c = 0; c < nc; ++c) {
    double w = 0.0;
    for (std::size_t x = 0; x < na; ++x) {
      for (std::size_t y = 0; y < nb; ++y) {
        const double v = masses[(x * nb + y) * nc + c];
        slice[x * nb + y] = v;
        w += v;
      }
    }
    res.weights[c] = w;
    if (w <= 0.0) {
      res.skipped.push_back(c);
      continue;
    }
    for (double& v : slice) v /= w;
    res.per_context[c] = mi_table(slice, na, nb);
    res.value += w * res.per_context[c];
  }
  return res;
}

double mi_source_kernel(const Dist& src, const Kernel& k) {
  if (src.size() != k.in_size()) throw validation_error("mi_source_kernel: size mismatch");
  std::vector<double> joint(src.size() * k.out_size());
  for (std::size_t a = 0; a < src.size(); ++a) {
    for (std::size_t b = 0; b < k.out_size(); ++b) {
      joint[a * k.out_size() + b] = src[a] * k(a, b);
    }
  }
  return mi_table(joint, src.size(), k.out_size());
}

}  // namespace capint::prob

namespace capint::rng {

std::size_t categorical(std::span<const double> masses, double u) {
  double cum = 0.0;
  std::size_t last = masses.size();
  for (std::size_t i = 0; i < masses.size(); ++i) {
    if (masses[i] <= 0.0) continue;
    last = i;
    cum += masses[i];
    if (u < cum) return i;
  }
  if (last == masses.size()) throw validation_error("categorical: no positive mass");
  return last;  // u fell in the rounding sliver above the last atom
}

}  // namespace capint::rng
