#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "capint/channel.hpp"
#include "capint/rng.hpp"
#include "test_util.hpp"

using namespace capint;
using namespace capint::prob;
using namespace capint::channel;
using testutil::random_dist;
using testutil::random_joint;
using testutil::random_kernel;

namespace {

// Independent oracle for CardinalityBounded(2): every 2-cell partition is a
// subset/complement pair, so scan subsets containing element 0.
double two_cell_partition_oracle(const Dist& source) {
  const std::size_t n = source.size();
  double best = 0.0;  // single-cell partition
  // mask says which of elements 1..n-1 join u0's cell; mask = all-ones is the
  // single-cell partition, already covered by best's initializer.
  for (std::size_t mask = 0; mask + 1 < (1ull << (n - 1)); ++mask) {
    double pa = source[0];
    for (std::size_t i = 1; i < n; ++i) {
      if (mask & (1ull << (i - 1))) pa += source[i];
    }
    const double pb = 1.0 - pa;
    double h = 0.0;
    if (pa > 0.0) h -= pa * std::log(pa);
    if (pb > 0.0) h -= pb * std::log(pb);
    best = std::max(best, h);
  }
  return best;
}

double partition_value(const Dist& source, const std::vector<std::size_t>& cell, std::size_t k) {
  std::vector<double> mass(k, 0.0);
  for (std::size_t i = 0; i < cell.size(); ++i) mass[cell[i]] += source[i];
  double h = 0.0;
  for (double v : mass) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

// Random-restart local search over cell assignments: the cross-check oracle
// for the exhaustive partition sweep.
double hill_climb_capacity(const Dist& source, std::size_t k, std::uint64_t seed,
                           std::size_t restarts) {
  const std::size_t n = source.size();
  double best = 0.0;
  for (std::size_t r = 0; r < restarts; ++r) {
    rng::Sequence seq(rng::derive(seed, r));
    std::vector<std::size_t> cell(n);
    for (auto& c : cell) c = static_cast<std::size_t>(seq.uniform() * static_cast<double>(k));
    double value = partition_value(source, cell, k);
    bool improved = true;
    while (improved) {
      improved = false;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t old = cell[i];
        for (std::size_t c = 0; c < k; ++c) {
          if (c == old) continue;
          cell[i] = c;
          const double v = partition_value(source, cell, k);
          if (v > value + 1e-12) {
            value = v;
            improved = true;
          } else {
            cell[i] = old;
          }
          if (cell[i] != old) break;  // keep the improving move
        }
      }
    }
    best = std::max(best, value);
  }
  return best;
}

CascadeChannel random_cascade(rng::Sequence& seq, std::size_t nu, std::size_t ns,
                              std::size_t nh, std::size_t ny) {
  std::vector<Kernel> cog, art;
  for (std::size_t s = 0; s < ns; ++s) {
    cog.push_back(random_kernel(seq, nu, nh));
    art.push_back(random_kernel(seq, nh, ny));
  }
  return CascadeChannel(std::move(cog), std::move(art));
}

JointTable uniform_joint_us(std::size_t nu, std::size_t ns) {
  return JointTable({{"u", nu}, {"s", ns}},
                    std::vector<double>(nu * ns, 1.0 / static_cast<double>(nu * ns)));
}

}  // namespace

TEST_CASE("cardinality capacity: lossless and binary-cell oracles") {
  const Dist u4 = Dist::uniform(4);
  const CapacityValue lossless = capacity_for_family(u4, CardinalityBounded{4});
  CHECK(lossless.nats == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(lossless.witness.has_deterministic_rows());

  const CapacityValue two = capacity_for_family(u4, CardinalityBounded{2});
  CHECK(two.nats == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(two.nats == doctest::Approx(two_cell_partition_oracle(u4)).epsilon(1e-14));
  // witness splits 4 symbols into two cells of equal mass
  CHECK(two.witness.has_deterministic_rows());

  const Dist skew({0.5, 0.25, 0.25});
  const CapacityValue sk = capacity_for_family(skew, CardinalityBounded{2});
  CHECK(sk.nats == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(sk.nats == doctest::Approx(two_cell_partition_oracle(skew)).epsilon(1e-14));
  // the unique optimal split is {u0} | {u1,u2}
  CHECK(sk.witness(0, 0) == 1.0);
  CHECK(sk.witness(1, 1) == 1.0);
  CHECK(sk.witness(2, 1) == 1.0);
}

TEST_CASE("cardinality capacity matches hill-climb cross-check") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    rng::Sequence seq(rng::derive(4242, seed));
    const std::size_t n = 3 + seed % 4;        // 3..6
    const std::size_t k = 2 + seed % 2;        // 2..3
    const Dist source = random_dist(seq, n);
    const double exact = capacity_for_family(source, CardinalityBounded{k}).nats;
    const double climbed = hill_climb_capacity(source, k, seed, 50);
    CHECK(exact >= climbed - 1e-9);   // exhaustive search is the sup
    CHECK(climbed >= exact - 1e-6);   // restarts find it on desk-size inputs
  }
}

TEST_CASE("cardinality capacity bounds and refusals") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    rng::Sequence seq(rng::derive(515, seed));
    const Dist source = random_dist(seq, 5);
    for (std::size_t k : {1u, 2u, 3u, 4u}) {
      const double c = capacity_for_family(source, CardinalityBounded{k}).nats;
      CHECK(c <= entropy(source) + 1e-12);
      CHECK(c <= std::log(static_cast<double>(k)) + 1e-12);
    }
  }
  CHECK(capacity_for_family(Dist::uniform(3), CardinalityBounded{1}).nats == 0.0);

  CHECK_THROWS_AS(capacity_for_family(Dist::uniform(21), CardinalityBounded{2}),
                  resource_limit_error);
  // |U| = 16, k = 8: partition count blows the 1e7 desk budget
  CHECK_THROWS_AS(capacity_for_family(Dist::uniform(16), CardinalityBounded{8}),
                  resource_limit_error);
  CHECK_THROWS_AS(capacity_for_family(Dist::uniform(2), CardinalityBounded{0}),
                  validation_error);
}

TEST_CASE("enumerated and parametric families take the max, ties to first") {
  const Dist u2 = Dist::uniform(2);
  EnumeratedSet es{{Kernel::symmetric(2, 0.3), Kernel::symmetric(2, 0.1),
                    Kernel::symmetric(2, 0.1)}};
  const CapacityValue v = capacity_for_family(u2, es);
  CHECK(v.nats == doctest::Approx(mi_source_kernel(u2, Kernel::symmetric(2, 0.1))));
  CHECK(v.witness_index == 1);  // first of the two tied kernels

  // monotonicity: enlarging the set never lowers capacity
  EnumeratedSet bigger = es;
  bigger.kernels.push_back(Kernel::identity(2));
  CHECK(capacity_for_family(u2, bigger).nats >= v.nats);
  CHECK(capacity_for_family(u2, bigger).nats == doctest::Approx(std::log(2.0)));

  NoisyParametric np;
  for (double flip : {0.4, 0.25, 0.05, 0.45}) {
    np.params.push_back(flip);
    np.kernels.push_back(Kernel::symmetric(2, flip));
  }
  const CapacityValue g = capacity_for_family(u2, np);
  CHECK(g.witness_index == 2);
  CHECK(g.nats == doctest::Approx(mi_source_kernel(u2, Kernel::symmetric(2, 0.05))));

  CHECK_THROWS_AS(capacity_for_family(u2, EnumeratedSet{}), validation_error);
  CHECK_THROWS_AS(capacity_for_family(u2, EnumeratedSet{{Kernel::identity(3)}}),
                  validation_error);
  NoisyParametric bad;
  bad.kernels.push_back(Kernel::identity(2));
  CHECK_THROWS_AS(capacity_for_family(u2, bad), validation_error);
}

TEST_CASE("total capacity: lossless, bottleneck, and two-context oracles") {
  // Both stages lossless: average = E_s[H(U|S=s)].
  JointTable us({{"u", 4}, {"s", 2}},
                {0.25, 0.0, 0.25, 0.0, 0.0, 0.25, 0.0, 0.25});  // s=0: u in {0,1}; s=1: {2,3}...
  // (u,s) row-major: cells (u0,s0)=0.25,(u0,s1)=0,(u1,s0)=0.25,(u1,s1)=0,(u2,s0)=0,(u2,s1)=0.25,...
  std::vector<ChannelFamily> lossless_cog(2, CardinalityBounded{4});
  std::vector<ChannelFamily> lossless_art(2, CardinalityBounded{4});
  const CapacityReport lossless = total_capacity(lossless_cog, lossless_art, us);
  CHECK(lossless.average == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  for (const auto& ctx : lossless.per_context) {
    CHECK(ctx.c_tot == std::min(ctx.c_cog, ctx.c_art));
    CHECK(ctx.c_cog == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  }

  // cog bounded at ln 2, art lossless, single uniform context.
  JointTable u4s1({{"u", 4}, {"s", 1}}, std::vector<double>(4, 0.25));
  const CapacityReport bottleneck = total_capacity({CardinalityBounded{2}},
                                                   {CardinalityBounded{4}}, u4s1);
  CHECK(bottleneck.average == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(bottleneck.per_context[0].c_cog == doctest::Approx(std::log(2.0)));
  // art sees the 2-cell H marginal, so its lossless capacity is ln 2 too
  CHECK(bottleneck.per_context[0].c_art == doctest::Approx(std::log(2.0)));

  // Two contexts with caps ln2 / ln4 and P(S) = (1/2, 1/2).
  JointTable u4s2 = uniform_joint_us(4, 2);
  const CapacityReport avg =
      total_capacity({CardinalityBounded{2}, CardinalityBounded{4}},
                     {CardinalityBounded{4}, CardinalityBounded{4}}, u4s2);
  CHECK(avg.average == doctest::Approx(1.0397207708399179).epsilon(1e-14));
  double acc = 0.0;
  for (std::size_t s = 0; s < 2; ++s) acc += avg.weights[s] * avg.per_context[s].c_tot;
  CHECK(avg.average == doctest::Approx(acc).epsilon(1e-15));
}

TEST_CASE("total capacity skips zero-mass contexts") {
  JointTable us({{"u", 2}, {"s", 2}}, {0.5, 0.0, 0.5, 0.0});
  const CapacityReport r = total_capacity({CardinalityBounded{2}, CardinalityBounded{2}},
                                          {CardinalityBounded{2}, CardinalityBounded{2}}, us);
  REQUIRE(r.skipped.size() == 1);
  CHECK(r.skipped[0] == 1);
  CHECK_FALSE(r.per_context[1].cog_witness.has_value());
  CHECK(r.average == doctest::Approx(std::log(2.0)));
}

TEST_CASE("cascade dpi: identity, constant, random") {
  // identity cascade: I(U;Y|s) = I(U;H|s) = H(U|s), slack 0
  std::vector<Kernel> id2{Kernel::identity(2), Kernel::identity(2)};
  const CascadeChannel identity_cascade(id2, id2);
  JointTable us = uniform_joint_us(2, 2);
  const DpiReport id_report = verify_cascade_dpi(identity_cascade, us);
  CHECK(id_report.all_pass);
  for (const DpiContext& c : id_report.per_context) {
    CHECK(c.i_uy == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(std::abs(c.slack) <= 1e-12);
  }

  // constant articulation stage: I(U;Y|S) = 0
  const CascadeChannel degenerate(
      {Kernel::identity(2), Kernel::identity(2)},
      {Kernel::constant(2, 3, 1), Kernel::constant(2, 3, 1)});
  const DpiReport deg = verify_cascade_dpi(degenerate, us);
  CHECK(deg.all_pass);
  for (const DpiContext& c : deg.per_context) {
    CHECK(c.i_uy == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(c.i_hy == doctest::Approx(0.0).epsilon(1e-12));
  }

  // randomized suite: 100 seeds, all contexts pass
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    rng::Sequence seq(rng::derive(31337, seed));
    const std::size_t nu = 2 + seed % 3, nh = 2 + (seed / 3) % 3, ny = 2 + (seed / 7) % 2;
    const std::size_t ns = 1 + seed % 2;
    const CascadeChannel cascade = random_cascade(seq, nu, ns, nh, ny);
    JointTable source = random_joint(seq, {{"u", nu}, {"s", ns}});
    const DpiReport r = verify_cascade_dpi(cascade, source);
    CHECK(r.all_pass);
    CHECK(r.average.pass);
  }
}

TEST_CASE("sample_dataset: preconditions, degenerate law, reproducibility") {
  const CascadeChannel cascade({Kernel::identity(2)}, {Kernel::identity(2)});
  JointTable us({{"u", 2}, {"s", 1}}, {1.0, 0.0});
  CHECK_THROWS_AS(sample_dataset(us, cascade, 0, 7), validation_error);

  const Dataset d = sample_dataset(us, cascade, 25, 7);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(d.oracle_u(i) == 0);
    CHECK(d.observed(i).s == 0);
    CHECK(d.observed(i).y == 0);
  }

  // prefix property: first records agree across different m (per-sample streams)
  const CascadeChannel noisy({Kernel::symmetric(2, 0.2)}, {Kernel::symmetric(2, 0.1)});
  JointTable src({{"u", 2}, {"s", 1}}, {0.6, 0.4});
  const Dataset big = sample_dataset(src, noisy, 100, 99);
  const Dataset small = sample_dataset(src, noisy, 50, 99);
  for (std::size_t i = 0; i < small.size(); ++i) {
    CHECK(big.oracle_u(i) == small.oracle_u(i));
    CHECK(big.observed(i).y == small.observed(i).y);
  }
}

TEST_CASE("sample_dataset empirical frequencies within 3 sigma") {
  rng::Sequence seq(2718);
  const CascadeChannel cascade = random_cascade(seq, 3, 2, 3, 3);
  JointTable source = random_joint(seq, {{"u", 3}, {"s", 2}});
  const std::size_t m = 100000;
  const Dataset d = sample_dataset(source, cascade, m, 40404);

  const JointTable law = cascade.output_joint(source);
  std::vector<double> counts(law.cells(), 0.0);
  const std::size_t ns = 2, ny = 3;
  for (std::size_t i = 0; i < d.size(); ++i) {
    counts[(d.oracle_u(i) * ns + d.observed(i).s) * ny + d.observed(i).y] += 1.0;
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const double p = law.masses()[c];
    const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(m));
    CHECK(std::abs(counts[c] / static_cast<double>(m) - p) <= 3.0 * sigma + 1e-12);
  }
}

TEST_CASE("dataset jsonl round trip is byte identical") {
  rng::Sequence seq(5150);
  const CascadeChannel cascade = random_cascade(seq, 2, 2, 2, 3);
  JointTable source = random_joint(seq, {{"u", 2}, {"s", 2}});
  const Dataset d = sample_dataset(source, cascade, 17, 123);

  std::ostringstream first;
  d.write_jsonl(first);
  std::istringstream in(first.str());
  const Dataset back = Dataset::read_jsonl(in);
  CHECK(back.seed() == d.seed());
  CHECK(back.cascade_hash() == cascade.content_hash());
  std::ostringstream second;
  back.write_jsonl(second);
  CHECK(first.str() == second.str());
  CHECK(first.str().find("\"oracle_only\":[\"u\"]") != std::string::npos);
}

TEST_CASE("cascade json round trip and hash sensitivity") {
  rng::Sequence seq(8080);
  const CascadeChannel cascade = random_cascade(seq, 2, 2, 3, 2);
  const CascadeChannel back = CascadeChannel::from_json(cascade.to_json());
  CHECK(back.content_hash() == cascade.content_hash());

  const CascadeChannel other({Kernel::symmetric(2, 0.1), Kernel::symmetric(2, 0.1)},
                             {Kernel::symmetric(2, 0.2), Kernel::symmetric(2, 0.2)});
  CHECK(other.content_hash() != cascade.content_hash());
}

TEST_CASE("coarsen_context: identity, constant, random merges") {
  rng::Sequence seq(999);
  JointTable source = random_joint(seq, {{"u", 3}, {"s", 4}});

  const std::size_t id_map[] = {0, 1, 2, 3};
  const CoarsenResult same = coarsen_context(source, id_map);
  CHECK(same.i_usp == doctest::Approx(same.i_us).epsilon(1e-12));

  const std::size_t const_map[] = {0, 0, 0, 0};
  const CoarsenResult crushed = coarsen_context(source, const_map);
  CHECK(crushed.i_usp == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(crushed.joint.axis_size("s") == 1);

  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    rng::Sequence s2(rng::derive(1234, seed));
    JointTable j = random_joint(s2, {{"u", 3}, {"s", 4}});
    std::size_t merge[4];
    for (std::size_t i = 0; i < 4; ++i)
      merge[i] = static_cast<std::size_t>(s2.uniform() * 2.0);
    const CoarsenResult r = coarsen_context(j, merge);
    CHECK(r.slack >= -1e-9);
    CHECK(r.i_usp <= r.i_us + 1e-9);
  }

  const std::size_t short_map[] = {0, 1};
  CHECK_THROWS_AS(coarsen_context(source, short_map), validation_error);
}

TEST_CASE("cascade validation") {
  CHECK_THROWS_AS(CascadeChannel({}, {}), validation_error);
  CHECK_THROWS_AS(CascadeChannel({Kernel::identity(2)}, {}), validation_error);
  // art input must equal cog output
  CHECK_THROWS_AS(CascadeChannel({Kernel::identity(2)}, {Kernel::identity(3)}),
                  validation_error);
  // sizes must agree across contexts
  CHECK_THROWS_AS(CascadeChannel({Kernel::identity(2), Kernel::identity(3)},
                                 {Kernel::identity(2), Kernel::identity(3)}),
                  validation_error);
}
