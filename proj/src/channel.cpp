#include "capint/channel.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "capint/rng.hpp"

namespace capint::channel {

namespace {

constexpr double kCertTol = 1e-9;
constexpr std::size_t kMaxPartitionInput = 20;
constexpr std::uint64_t kPartitionBudget = 10'000'000;

// Number of partitions of n elements into at most k nonempty cells,
// via Stirling numbers of the second kind.
std::uint64_t partition_count(std::size_t n, std::size_t k) {
  // s[j] = S(i, j), rolled over i; overflow-safe under the caller's n <= 20
  // cap (Bell(20) < 2^63).
  std::vector<std::uint64_t> s(n + 1, 0);
  s[0] = 1;  // S(0,0)
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = std::min(i, n); j >= 1; --j) {
      s[j] = static_cast<std::uint64_t>(j) * s[j] + s[j - 1];
    }
    s[0] = 0;
  }
  std::uint64_t total = 0;
  for (std::size_t j = 1; j <= std::min(n, k); ++j) total += s[j];
  return total;
}

// Exhaustive search over set partitions of {0..n-1} into <= k cells, encoded
// as restricted growth strings. The sup of I(U;H) over kernels with <= k
// outputs is attained at a deterministic kernel (MI is convex in the kernel
// for fixed source), and a deterministic kernel is exactly a partition; its
// value is the entropy of the cell masses.
CapacityValue cardinality_capacity(const Dist& source, std::size_t k) {
  const std::size_t n = source.size();
  if (n > kMaxPartitionInput) {
    throw resource_limit_error(
        "capacity_for_family: CardinalityBounded with |U| = " + std::to_string(n) +
        " > 20; partition search intractable, coarsen the value alphabet first");
  }
  if (k >= n) {
    // Singleton cells are optimal: I = H(source), the unconditional maximum.
    return {prob::entropy(source), Kernel::identity(n), 0};
  }
  if (partition_count(n, k) > kPartitionBudget) {
    throw resource_limit_error(
        "capacity_for_family: partition count for |U|=" + std::to_string(n) +
        ", k=" + std::to_string(k) + " exceeds the desk budget of 1e7; coarsen first");
  }

  std::vector<std::size_t> rgs(n, 0);  // rgs[i] = cell of element i
  std::vector<double> cell_mass(k, 0.0);
  double best = -1.0;
  std::vector<std::size_t> best_rgs;
  std::uint64_t best_rank = 0;
  std::uint64_t rank = 0;

  // Depth-first over restricted growth strings: rgs[0]=0 and
  // rgs[i] <= min(max(rgs[0..i-1])+1, k-1).
  auto recurse = [&](auto&& self, std::size_t i, std::size_t max_used) -> void {
    if (i == n) {
      double h = 0.0;
      for (std::size_t c = 0; c <= max_used; ++c) {
        if (cell_mass[c] > 0.0) h -= cell_mass[c] * std::log(cell_mass[c]);
      }
      if (best < 0.0 || h > best) {  // strict improvement keeps the first argmax
        best = h;
        best_rgs = rgs;
        best_rank = rank;
      }
      ++rank;
      return;
    }
    const std::size_t top = std::min(max_used + 1, k - 1);
    for (std::size_t c = 0; c <= top; ++c) {
      rgs[i] = c;
      cell_mass[c] += source[i];
      self(self, i + 1, std::max(max_used, c));
      cell_mass[c] -= source[i];
    }
  };
  rgs[0] = 0;
  cell_mass[0] += source[0];
  recurse(recurse, 1, 0);
  cell_mass[0] -= source[0];

  return {prob::clamp_information(best), Kernel::deterministic(n, k, best_rgs), best_rank};
}

CapacityValue enumerated_capacity(const Dist& source, std::span<const Kernel> kernels) {
  double best = -1.0;
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    const double v = prob::mi_source_kernel(source, kernels[i]);
    if (v > best) {  // strict: ties keep the first kernel
      best = v;
      best_i = i;
    }
  }
  return {best, kernels[best_i], best_i};
}

}  // namespace

CascadeChannel::CascadeChannel(std::vector<Kernel> cog, std::vector<Kernel> art)
    : cog_(std::move(cog)), art_(std::move(art)) {
  if (cog_.empty() || cog_.size() != art_.size()) {
    throw validation_error("CascadeChannel: need one (cog, art) kernel pair per context");
  }
  for (std::size_t s = 0; s < cog_.size(); ++s) {
    if (cog_[s].in_size() != cog_[0].in_size() || cog_[s].out_size() != cog_[0].out_size() ||
        art_[s].in_size() != art_[0].in_size() || art_[s].out_size() != art_[0].out_size()) {
      throw validation_error("CascadeChannel: alphabet sizes differ across contexts");
    }
    if (art_[s].in_size() != cog_[s].out_size()) {
      throw validation_error("CascadeChannel: art input alphabet must match cog output");
    }
  }
}

std::uint64_t CascadeChannel::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const Kernel& k : cog_) h = k.content_hash(h);
  for (const Kernel& k : art_) h = k.content_hash(h);
  return h;
}

JointTable CascadeChannel::joint(const JointTable& source_us) const {
  const std::size_t iu = source_us.axis_index("u");
  const std::size_t is = source_us.axis_index("s");
  const std::size_t nu = u_size(), ns = contexts(), nh = h_size(), ny = y_size();
  if (source_us.axes()[iu].size != nu || source_us.axes()[is].size != ns) {
    throw validation_error("CascadeChannel::joint: source alphabet mismatch");
  }
  std::vector<double> m(nu * ns * nh * ny, 0.0);
  std::vector<std::size_t> idx(source_us.rank());
  for (std::size_t u = 0; u < nu; ++u) {
    for (std::size_t s = 0; s < ns; ++s) {
      idx[iu] = u;
      idx[is] = s;
      const double pus = source_us.mass(idx);
      if (pus == 0.0) continue;
      for (std::size_t h = 0; h < nh; ++h) {
        const double ph = cog_[s](u, h);
        if (ph == 0.0) continue;
        for (std::size_t y = 0; y < ny; ++y) {
          m[((u * ns + s) * nh + h) * ny + y] = pus * ph * art_[s](h, y);
        }
      }
    }
  }
  return JointTable({{"u", nu}, {"s", ns}, {"h", nh}, {"y", ny}}, std::move(m));
}

JointTable CascadeChannel::output_joint(const JointTable& source_us) const {
  return joint(source_us).marginal({"u", "s", "y"});
}

nlohmann::json CascadeChannel::to_json() const {
  nlohmann::json cog = nlohmann::json::array(), art = nlohmann::json::array();
  for (const Kernel& k : cog_) cog.push_back(k.to_json());
  for (const Kernel& k : art_) art.push_back(k.to_json());
  return {{"cog", cog}, {"art", art}};
}

CascadeChannel CascadeChannel::from_json(const nlohmann::json& j) {
  std::vector<Kernel> cog, art;
  for (const auto& k : j.at("cog")) cog.push_back(Kernel::from_json(k));
  for (const auto& k : j.at("art")) art.push_back(Kernel::from_json(k));
  return CascadeChannel(std::move(cog), std::move(art));
}

void validate_family(const ChannelFamily& family, std::size_t in_size) {
  if (const auto* cb = std::get_if<CardinalityBounded>(&family)) {
    if (cb->k < 1) throw validation_error("ChannelFamily: cardinality bound k must be >= 1");
  } else if (const auto* es = std::get_if<EnumeratedSet>(&family)) {
    if (es->kernels.empty()) throw validation_error("ChannelFamily: enumerated set is empty");
    for (const Kernel& k : es->kernels) {
      if (k.in_size() != in_size) {
        throw validation_error("ChannelFamily: enumerated kernel input alphabet mismatch");
      }
    }
  } else {
    const auto& np = std::get<NoisyParametric>(family);
    if (np.kernels.empty()) throw validation_error("ChannelFamily: parameter grid is empty");
    if (np.params.size() != np.kernels.size()) {
      throw validation_error("ChannelFamily: params/kernels length mismatch");
    }
    for (const Kernel& k : np.kernels) {
      if (k.in_size() != in_size) {
        throw validation_error("ChannelFamily: grid kernel input alphabet mismatch");
      }
    }
  }
}

CapacityValue capacity_for_family(const Dist& source, const ChannelFamily& family) {
  validate_family(family, source.size());
  if (const auto* cb = std::get_if<CardinalityBounded>(&family)) {
    CapacityValue v = cardinality_capacity(source, cb->k);
    if (!v.witness.has_deterministic_rows()) {
      throw domain_error("capacity_for_family: cardinality witness must be deterministic");
    }
    return v;
  }
  if (const auto* es = std::get_if<EnumeratedSet>(&family)) {
    return enumerated_capacity(source, es->kernels);
  }
  return enumerated_capacity(source, std::get<NoisyParametric>(family).kernels);
}

CapacityReport total_capacity(const std::vector<ChannelFamily>& cog_families,
                              const std::vector<ChannelFamily>& art_families,
                              const JointTable& source_us) {
  const std::size_t ns = source_us.axis_size("s");
  const std::size_t nu = source_us.axis_size("u");
  if (cog_families.size() != ns || art_families.size() != ns) {
    throw validation_error("total_capacity: need one (F_cog, F_art) pair per context");
  }
  const Dist ps = source_us.marginal_dist("s");
  const JointTable su = source_us.marginal({"s", "u"});

  CapacityReport report;
  report.weights.assign(ps.masses().begin(), ps.masses().end());
  report.per_context.resize(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    if (ps[s] == 0.0) {
      report.skipped.push_back(s);
      continue;
    }
    std::vector<double> cond(nu);
    for (std::size_t u = 0; u < nu; ++u) {
      const std::size_t idx[] = {s, u};
      cond[u] = su.mass(idx) / ps[s];
    }
    const Dist source_s{std::move(cond)};
    CapacityValue cog = capacity_for_family(source_s, cog_families[s]);
    // Stage 2 sees the H-marginal induced by the stage-1 witness.
    const Dist h_marginal = cog.witness.push(source_s);
    CapacityValue art = capacity_for_family(h_marginal, art_families[s]);
    ContextCapacity& ctx = report.per_context[s];
    ctx.c_cog = cog.nats;
    ctx.c_art = art.nats;
    ctx.c_tot = std::min(cog.nats, art.nats);
    ctx.cog_witness = std::move(cog.witness);
    ctx.art_witness = std::move(art.witness);
    report.average += report.weights[s] * ctx.c_tot;
  }
  return report;
}

DpiReport verify_cascade_dpi(const CascadeChannel& cascade, const JointTable& source_us) {
  const JointTable full = cascade.joint(source_us);
  const prob::ConditionalMiResult uy = prob::conditional_mi(full, "u", "y", "s");
  const prob::ConditionalMiResult uh = prob::conditional_mi(full, "u", "h", "s");
  const prob::ConditionalMiResult hy = prob::conditional_mi(full, "h", "y", "s");

  DpiReport report;
  report.weights = uy.weights;
  report.skipped = uy.skipped;
  report.per_context.resize(uy.per_context.size());
  for (std::size_t s = 0; s < uy.per_context.size(); ++s) {
    DpiContext& c = report.per_context[s];
    c.i_uy = uy.per_context[s];
    c.i_uh = uh.per_context[s];
    c.i_hy = hy.per_context[s];
    c.bound = std::min(c.i_uh, c.i_hy);
    c.slack = c.bound - c.i_uy;
    c.pass = c.slack >= -kCertTol;
  }
  report.average.i_uy = uy.value;
  report.average.i_uh = uh.value;
  report.average.i_hy = hy.value;
  double avg_min = 0.0;
  for (std::size_t s = 0; s < report.per_context.size(); ++s) {
    avg_min += report.weights[s] * report.per_context[s].bound;
  }
  report.average.bound = avg_min;
  report.average.slack = avg_min - uy.value;
  report.average.pass = report.average.slack >= -kCertTol;
  report.all_pass = report.average.pass;
  for (const DpiContext& c : report.per_context) report.all_pass = report.all_pass && c.pass;
  return report;
}

Dataset::Dataset(std::uint64_t seed, std::uint64_t cascade_hash,
                 std::vector<DatasetRecord> records)
    : seed_(seed), cascade_hash_(cascade_hash), records_(std::move(records)) {
  if (records_.empty()) throw validation_error("Dataset: need at least one record");
}

void Dataset::write_jsonl(std::ostream& os) const {
  nlohmann::ordered_json header;
  header["seed"] = seed_;
  header["m"] = records_.size();
  header["cascade_hash"] = cascade_hash_;
  header["oracle_only"] = nlohmann::json::array({"u"});
  os << header.dump() << '\n';
  for (const DatasetRecord& r : records_) {
    nlohmann::ordered_json rec;
    rec["u"] = r.u;
    rec["s"] = r.s;
    rec["y"] = r.y;
    os << rec.dump() << '\n';
  }
}

Dataset Dataset::read_jsonl(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw validation_error("Dataset: missing JSONL header");
  const nlohmann::json header = nlohmann::json::parse(line);
  const std::uint64_t seed = header.at("seed").get<std::uint64_t>();
  const std::uint64_t hash = header.at("cascade_hash").get<std::uint64_t>();
  const std::size_t m = header.at("m").get<std::size_t>();
  std::vector<DatasetRecord> records;
  records.reserve(m);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const nlohmann::json rec = nlohmann::json::parse(line);
    records.push_back({rec.at("u").get<std::size_t>(), rec.at("s").get<std::size_t>(),
                       rec.at("y").get<std::size_t>()});
  }
  if (records.size() != m) {
    throw validation_error("Dataset: header advertises m=" + std::to_string(m) + " but " +
                           std::to_string(records.size()) + " records follow");
  }
  return Dataset(seed, hash, std::move(records));
}

Dataset sample_dataset(const JointTable& source_us, const CascadeChannel& cascade,
                       std::size_t m, std::uint64_t seed) {
  if (m < 1) throw validation_error("sample_dataset: m must be >= 1");
  const std::size_t nu = cascade.u_size(), ns = cascade.contexts();
  const JointTable us = source_us.marginal({"u", "s"});
  if (us.axes()[0].size != nu || us.axes()[1].size != ns) {
    throw validation_error("sample_dataset: source alphabet mismatch with cascade");
  }
  std::span<const double> flat = us.masses();  // row-major (u, s)

  std::vector<DatasetRecord> records(m);
  for (std::size_t i = 0; i < m; ++i) {
    const rng::Stream stream = rng::sample_stream(seed, i);
    const std::size_t us_idx = rng::categorical(flat, stream.uniform(0));
    const std::size_t u = us_idx / ns, s = us_idx % ns;
    const std::size_t h = rng::categorical(cascade.cog(s).row(u), stream.uniform(1));
    const std::size_t y = rng::categorical(cascade.art(s).row(h), stream.uniform(2));
    records[i] = {u, s, y};
  }
  return Dataset(seed, cascade.content_hash(), std::move(records));
}

CoarsenResult coarsen_context(const JointTable& source_us, std::span<const std::size_t> t) {
  const JointTable us = source_us.marginal({"u", "s"});
  const std::size_t nu = us.axes()[0].size, ns = us.axes()[1].size;
  if (t.size() != ns) {
    throw validation_error("coarsen_context: map must be total on the S alphabet");
  }
  std::size_t nsp = 0;
  for (std::size_t s = 0; s < ns; ++s) nsp = std::max(nsp, t[s] + 1);
  std::vector<double> m(nu * nsp, 0.0);
  for (std::size_t u = 0; u < nu; ++u) {
    for (std::size_t s = 0; s < ns; ++s) {
      m[u * nsp + t[s]] += us.masses()[u * ns + s];
    }
  }
  JointTable coarse({{"u", nu}, {"s", nsp}}, std::move(m));
  const double before = prob::mutual_information(us, "u", "s");
  const double after = prob::mutual_information(coarse, "u", "s");
  const double slack = before - after;
  if (slack < -kCertTol) {
    throw domain_error("coarsen_context: I(U;S') exceeds I(U;S); coarsening must not add info");
  }
  return {std::move(coarse), before, after, slack};
}

}  // namespace capint::channel
