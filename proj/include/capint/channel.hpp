#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "capint/info.hpp"

namespace capint::channel {

using prob::Dist;
using prob::JointTable;
using prob::Kernel;

// Two-stage cascade U -> H -> Y, one kernel pair per context s. The Markov
// property is structural: y depends on u only through h.
class CascadeChannel {
 public:
  CascadeChannel(std::vector<Kernel> cog, std::vector<Kernel> art);

  std::size_t contexts() const { return cog_.size(); }
  std::size_t u_size() const { return cog_[0].in_size(); }
  std::size_t h_size() const { return cog_[0].out_size(); }
  std::size_t y_size() const { return art_[0].out_size(); }

  const Kernel& cog(std::size_t s) const { return cog_.at(s); }
  const Kernel& art(std::size_t s) const { return art_.at(s); }

  std::uint64_t content_hash() const;

  // Full law p(u,s,h,y) under a source p(u,s); axes named "u","s","h","y".
  JointTable joint(const JointTable& source_us) const;
  // Marginal law p(u,s,y).
  JointTable output_joint(const JointTable& source_us) const;

  nlohmann::json to_json() const;
  static CascadeChannel from_json(const nlohmann::json& j);

 private:
  std::vector<Kernel> cog_, art_;
};

// Admissible per-stage kernel families.
struct CardinalityBounded {
  std::size_t k = 1;  // output alphabet limited to k symbols
};
struct EnumeratedSet {
  std::vector<Kernel> kernels;
};
struct NoisyParametric {
  std::vector<double> params;   // finite parameter grid, caller-chosen resolution
  std::vector<Kernel> kernels;  // kernels[i] = channel at params[i]
};
using ChannelFamily = std::variant<CardinalityBounded, EnumeratedSet, NoisyParametric>;

void validate_family(const ChannelFamily& family, std::size_t in_size);

struct CapacityValue {
  double nats;
  Kernel witness;             // attains `nats` under the fixed source
  std::size_t witness_index;  // enumerated/grid index; partition rank for cardinality
};

// sup of I(source; out) over the family, source FIXED (not optimized).
// CardinalityBounded is solved exactly over set partitions of the input into
// <= k cells; refuses |U| > 20 and partition counts past the desk budget.
CapacityValue capacity_for_family(const Dist& source, const ChannelFamily& family);

struct ContextCapacity {
  double c_cog = 0.0, c_art = 0.0, c_tot = 0.0;
  std::optional<Kernel> cog_witness, art_witness;  // empty for zero-mass contexts
};

struct CapacityReport {
  std::vector<ContextCapacity> per_context;
  std::vector<double> weights;         // P(S=s)
  std::vector<std::size_t> skipped;    // zero-mass contexts
  double average = 0.0;                // sum_s P(s) * c_tot(s)
};

// Per-context C_cog, C_art, C_tot = min and the P(S)-weighted average.
// The stage-2 source is the H-marginal induced by the stage-1 witness; the
// reported min is a conservative upper bound (per-stage optimizers need not
// be jointly realizable) and no achievability is claimed.
CapacityReport total_capacity(const std::vector<ChannelFamily>& cog_families,
                              const std::vector<ChannelFamily>& art_families,
                              const JointTable& source_us);

struct DpiContext {
  double i_uy = 0.0, i_uh = 0.0, i_hy = 0.0;
  double bound = 0.0;  // min(i_uh, i_hy)
  double slack = 0.0;  // bound - i_uy
  bool pass = false;
};

struct DpiReport {
  std::vector<DpiContext> per_context;
  std::vector<double> weights;
  std::vector<std::size_t> skipped;
  DpiContext average;  // weighted lhs vs weighted min, the averaged inequality
  bool all_pass = false;
};

// Checks I(U;Y|S=s) <= min(I(U;H|S=s), I(H;Y|S=s)) + 1e-9 per context, plus
// the averaged form.
DpiReport verify_cascade_dpi(const CascadeChannel& cascade, const JointTable& source_us);

struct DatasetRecord {
  std::size_t u, s, y;
};

struct ObservedSample {
  std::size_t s, y;
};

// Sampled triples. The latent u_i is oracle-only: learners consume observed()
// pairs, auditors may read oracle_u(). The JSONL header flags this.
class Dataset {
 public:
  Dataset(std::uint64_t seed, std::uint64_t cascade_hash, std::vector<DatasetRecord> records);

  std::size_t size() const { return records_.size(); }
  ObservedSample observed(std::size_t i) const {
    return {records_.at(i).s, records_.at(i).y};
  }
  std::size_t oracle_u(std::size_t i) const { return records_.at(i).u; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t cascade_hash() const { return cascade_hash_; }

  void write_jsonl(std::ostream& os) const;
  static Dataset read_jsonl(std::istream& is);

 private:
  std::uint64_t seed_, cascade_hash_;
  std::vector<DatasetRecord> records_;
};

// m i.i.d. triples: (u,s) from the source, then h, then y through the cascade.
// Sample i draws only from rng::sample_stream(seed, i) (counters 0,1,2), so
// parallel and serial sampling agree.
Dataset sample_dataset(const JointTable& source_us, const CascadeChannel& cascade,
                       std::size_t m, std::uint64_t seed);

struct CoarsenResult {
  JointTable joint;     // p(u, s') with axes "u", "s"
  double i_us = 0.0;    // I(U;S) before
  double i_usp = 0.0;   // I(U;S') after
  double slack = 0.0;   // i_us - i_usp, certified >= -1e-9
};

// Pushforward of the context through a total deterministic map t: S -> S'.
CoarsenResult coarsen_context(const JointTable& source_us, std::span<const std::size_t> t);

}  // namespace capint::channel
