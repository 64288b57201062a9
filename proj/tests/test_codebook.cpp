#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "capint/codebook.hpp"
#include "capint/rng.hpp"
#include "test_util.hpp"

using namespace capint;
using namespace capint::prob;
using namespace capint::channel;
using namespace capint::codebook;

namespace {

// Independent pairwise-disagreement count, written against positions directly.
double kendall_oracle(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  const std::size_t n = a.size();
  double disagree = 0.0, pairs = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = p + 1; q < n; ++q) {
      pairs += 1.0;
      // positions of items a[p], a[q] inside b
      const auto pb = std::find(b.begin(), b.end(), a[p]) - b.begin();
      const auto qb = std::find(b.begin(), b.end(), a[q]) - b.begin();
      if (pb > qb) disagree += 1.0;  // a ranks a[p] first, b ranks it later
    }
  }
  return disagree / pairs;
}

std::vector<std::vector<std::size_t>> all_perms(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::vector<std::vector<std::size_t>> out;
  do {
    out.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

std::vector<std::vector<double>> grid_1d(std::initializer_list<double> xs) {
  std::vector<std::vector<double>> pts;
  for (double x : xs) pts.push_back({x});
  return pts;
}

CascadeChannel identity_cascade(std::size_t n, std::size_t contexts) {
  std::vector<Kernel> ks(contexts, Kernel::identity(n));
  return CascadeChannel(ks, ks);
}

}  // namespace

TEST_CASE("classification books: constants and exhaustive margin") {
  const Codebook b2 = Codebook::build_classification(2);
  CHECK(b2.M() == 2);
  CHECK(b2.epsilon() == 0.0);
  CHECK(b2.delta() == 1.0);

  const Codebook b5 = Codebook::build_classification(5);
  CHECK(b5.M() == 5);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(b5.loss(b5.prototype(i), b5.action(i)) == 0.0);
    for (std::size_t j = 0; j < 5; ++j) {
      if (j == i) continue;
      CHECK(b5.loss(b5.prototype(j), b5.action(i)) == 1.0);
      ++checked;
    }
  }
  CHECK(checked == 5 * 4);

  CHECK_THROWS_AS(Codebook::build_classification(1), validation_error);
}

TEST_CASE("ranking books: delta, Kendall loss, exhaustive minimum") {
  const Codebook b3 = Codebook::build_ranking(3);
  CHECK(b3.M() == 6);
  CHECK(b3.delta() == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const Codebook b2 = Codebook::build_ranking(2);
  CHECK(b2.M() == 2);
  CHECK(b2.delta() == 1.0);

  // loss table matches an independently coded Kendall distance
  const auto perms = all_perms(3);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(b3.loss(i, j) == doctest::Approx(kendall_oracle(perms[i], perms[j])).epsilon(1e-15));
    }
  }

  // minimum off-diagonal loss over all 30 ordered pairs is exactly 1/3
  double min_off = 1.0;
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      if (i != j) min_off = std::min(min_off, b3.loss(j, i));
    }
  }
  CHECK(min_off == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  // delta * C(n,2) = 1 exactly for the whole legal range
  for (std::size_t n = 2; n <= 6; ++n) {
    const Codebook b = Codebook::build_ranking(n);
    CHECK(b.delta() * (static_cast<double>(n * (n - 1)) / 2.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(b.M() >= 2);
  }
  CHECK_THROWS_AS(Codebook::build_ranking(1), validation_error);
  CHECK_THROWS_AS(Codebook::build_ranking(7), validation_error);
}

TEST_CASE("mse packing: greedy prototypes, delta, Voronoi half-separation") {
  const Codebook unit = Codebook::build_mse_packing(grid_1d({0.0, 1.0}), 1.0, 1.0);
  CHECK(unit.delta() == doctest::Approx(0.25).epsilon(1e-15));

  // r = 2*tau saturates the loss range: delta = 1, eps + delta = 1
  const Codebook sat = Codebook::build_mse_packing(grid_1d({0.0, 2.0}), 2.0, 1.0);
  CHECK(sat.delta() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(sat.epsilon() + sat.delta() == doctest::Approx(1.0));

  const Codebook g = Codebook::build_mse_packing(grid_1d({0.0, 1.0, 2.0, 3.0}), 2.0, 2.0);
  REQUIRE(g.M() == 2);
  CHECK(g.prototype(0) == 0);
  CHECK(g.prototype(1) == 2);
  CHECK(g.delta() == doctest::Approx(0.25).epsilon(1e-15));

  // every action misclassified by Voronoi lies >= r/2 from the excluded prototype
  for (std::size_t a = 0; a < g.action_size(); ++a) {
    for (std::size_t i = 0; i < g.M(); ++i) {
      if (g.phi(a, 0) == i) continue;
      const double dist = std::abs(g.points()[a][0] - g.points()[g.prototype(i)][0]);
      CHECK(dist >= 2.0 / 2.0 - 1e-12);
    }
  }
  // Voronoi tie at point 1 (equidistant from 0 and 2) resolves to index 0
  CHECK(g.phi(1, 0) == 0);

  CHECK_THROWS_AS(Codebook::build_mse_packing(grid_1d({0.0, 1.0}), 5.0, 1.0),
                  validation_error);
  CHECK_THROWS_AS(Codebook::build_mse_packing({}, 1.0, 1.0), validation_error);
  CHECK_THROWS_AS(Codebook::build_mse_packing(grid_1d({0.0, 1.0}), 0.0, 1.0),
                  validation_error);
}

TEST_CASE("validate: constructors pass, corruption localizes, misdeclared delta fails link") {
  for (const Codebook& b :
       {Codebook::build_classification(4), Codebook::build_ranking(3),
        Codebook::build_mse_packing(grid_1d({0.0, 1.0, 2.0, 3.0}), 2.0, 2.0)}) {
    const ValidationReport r = validate(b, 2);
    CHECK(r.pass);
    CHECK(r.diagonal.worst_slack >= 0.0);
    CHECK(r.margin.worst_slack >= 0.0);
    CHECK(r.link.worst_slack >= 0.0);
  }

  // swap one action: the diagonal at that index must fail, nothing else
  Codebook corrupted = Codebook::build_classification(4);
  corrupted.set_action(1, 2);
  const ValidationReport r = validate(corrupted);
  CHECK_FALSE(r.pass);
  CHECK_FALSE(r.diagonal.pass);
  REQUIRE(r.diagonal.failures.size() == 1);
  CHECK(r.diagonal.failures[0][0] == 1);
  // margin also breaks where prototype 2 meets the swapped action
  CHECK_FALSE(r.margin.pass);

  // declared margin r^2/tau^2 overstates the Voronoi guarantee r^2/(4 tau^2)
  Codebook mse = Codebook::build_mse_packing(grid_1d({0.0, 0.5, 1.0}), 1.0, 1.0);
  CHECK(validate(mse).pass);
  mse.set_delta(1.0);  // r^2/tau^2 = 1
  const ValidationReport bad = validate(mse);
  CHECK_FALSE(bad.link.pass);
  CHECK(bad.link.worst_slack < 0.0);
}

TEST_CASE("mixture: uniform independent index, joint exposure") {
  const Codebook b2 = Codebook::build_classification(2);
  const MixtureInstance m2 = mixture(b2, Dist::uniform(1));
  const Dist pu = m2.us.marginal_dist("u");
  CHECK(pu[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(pu[1] == doctest::Approx(0.5).epsilon(1e-15));

  const Codebook b4 = Codebook::build_classification(4);
  const MixtureInstance m4 = mixture(b4, Dist({0.3, 0.7}));
  CHECK(m4.h_j_given_s == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(m4.i_js <= 1e-12);
  CHECK(m4.us.axis_size("u") == 4);
  CHECK(m4.us.axis_size("s") == 2);

  // U is a deterministic function of J: every j row has one nonzero u
  const JointTable ju = m4.jus.marginal({"j", "u"});
  for (std::size_t j = 0; j < 4; ++j) {
    std::size_t support = 0;
    for (std::size_t u = 0; u < 4; ++u) {
      const std::size_t idx[] = {j, u};
      if (ju.mass(idx) > 0.0) ++support;
    }
    CHECK(support == 1);
  }
}

TEST_CASE("canonical observable loss: noiseless, uninformative, tower identity") {
  const Codebook book = Codebook::build_classification(2);
  const MixtureInstance mix = mixture(book, Dist::uniform(1));

  // noiseless: posterior is a point mass, so l*(y,s,a) = l(y,a)
  const CascadeChannel clean = identity_cascade(2, 1);
  const ObsLossTable clean_obs = canonical_observable_loss(mix, clean);
  for (std::size_t y = 0; y < 2; ++y) {
    for (std::size_t a = 0; a < 2; ++a) {
      CHECK(clean_obs.value(y, 0, a) == doctest::Approx(book.loss(y, a)).epsilon(1e-15));
    }
  }

  // uninformative cognition: posterior equals the uniform prior, l* = 1/2
  const CascadeChannel fog({Kernel::uniform(2, 2)}, {Kernel::identity(2)});
  const ObsLossTable fog_obs = canonical_observable_loss(mix, fog);
  for (std::size_t y = 0; y < 2; ++y) {
    for (std::size_t a = 0; a < 2; ++a) {
      CHECK(fog_obs.value(y, 0, a) == doctest::Approx(0.5).epsilon(1e-14));
    }
  }

  // binary symmetric cascade: tower identity E[l*] = E[l] on explicit decoders
  const CascadeChannel bsc({Kernel::symmetric(2, 0.1)}, {Kernel::identity(2)});
  const ObsLossTable obs = canonical_observable_loss(mix, bsc);
  const DecoderTable ident(2, 1, {0, 1});
  const DecoderTable flipped(2, 1, {1, 0});
  const DecoderTable constant(2, 1, {0, 0});
  for (const DecoderTable& pi : {ident, flipped, constant}) {
    CHECK(tower_identity_gap(obs, mix, bsc, pi) <= 1e-9);
  }
  // direct-risk oracle for the identity decoder: P(flip) = 0.1
  CHECK(decoder_risk(mix, bsc, ident) == doctest::Approx(0.1).epsilon(1e-14));

  // five seeded random decoders
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    rng::Sequence seq(rng::derive(808, seed));
    std::vector<std::size_t> act(2);
    for (auto& a : act) a = seq.uniform() < 0.5 ? 0 : 1;
    CHECK(tower_identity_gap(obs, mix, bsc, DecoderTable(2, 1, act)) <= 1e-9);
  }
}

TEST_CASE("observable loss: zero-probability cells are undefined and excluded") {
  const Codebook book = Codebook::build_classification(2);
  const MixtureInstance mix = mixture(book, Dist::uniform(1));
  // articulation collapses everything onto y = 0; y = 1 never occurs
  const CascadeChannel collapse({Kernel::identity(2)}, {Kernel::constant(2, 2, 0)});
  const ObsLossTable obs = canonical_observable_loss(mix, collapse);
  CHECK(obs.defined(0, 0));
  CHECK_FALSE(obs.defined(1, 0));
  CHECK_THROWS_AS(obs.value(1, 0, 0), capint::domain_error);
  // risk sums still work: every decoder only meets defined cells
  const DecoderTable pi(2, 1, {0, 1});
  CHECK(tower_identity_gap(obs, mix, collapse, pi) <= 1e-9);
}

TEST_CASE("decoder risk oracles: perfect decoding and uninformative channel") {
  // noiseless: Bayes decoding achieves epsilon = 0
  const Codebook b4 = Codebook::build_classification(4);
  const MixtureInstance mix = mixture(b4, Dist::uniform(1));
  const CascadeChannel clean = identity_cascade(4, 1);
  const DecoderTable bayes(4, 1, {0, 1, 2, 3});
  CHECK(decoder_risk(mix, clean, bayes) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(misindex_probability(mix, clean, bayes) == doctest::Approx(0.0).epsilon(1e-15));

  // uninformative cognition: every decoder's risk is 3/4
  const CascadeChannel fog({Kernel::uniform(4, 4)}, {Kernel::identity(4)});
  for (std::size_t c = 0; c < 4; ++c) {
    const DecoderTable pi(4, 1, std::vector<std::size_t>(4, c));
    CHECK(decoder_risk(mix, fog, pi) == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(misindex_probability(mix, fog, pi) == doctest::Approx(0.75).epsilon(1e-14));
  }
}

TEST_CASE("soft link: exact books give zeta 0, loaded table book reaches zeta 1") {
  const Codebook book = Codebook::build_classification(2);
  const MixtureInstance mix = mixture(book, Dist::uniform(1));
  const CascadeChannel bsc({Kernel::symmetric(2, 0.2)}, {Kernel::identity(2)});
  const DecoderTable ident(2, 1, {0, 1});

  const SoftLinkReport exact = soft_link_slack(mix, bsc, ident);
  CHECK(exact.zeta == 0.0);
  CHECK_FALSE(exact.conditioning_empty);
  CHECK(exact.p_mis == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(exact.additive_floor == doctest::Approx(exact.exact_floor).epsilon(1e-15));
  CHECK(exact.multiplicative_floor == doctest::Approx(exact.exact_floor).epsilon(1e-15));
  CHECK(exact.risk >= exact.additive_floor - 1e-12);
  CHECK(exact.risk >= exact.multiplicative_floor - 1e-12);

  // perfect decoder over a noiseless channel: conditioning event is empty
  const SoftLinkReport empty = soft_link_slack(mix, identity_cascade(2, 1), ident);
  CHECK(empty.conditioning_empty);
  CHECK(empty.zeta == 0.0);
  CHECK(empty.p_mis == 0.0);

  // loaded table book violating the margin everywhere: zeta = 1
  const nlohmann::json j = {
      {"loss_kind", "table"},
      {"u_size", 2},
      {"action_size", 2},
      {"loss", {{0.0, 0.2}, {0.3, 0.0}}},
      {"M", 2},
      {"prototypes", {0, 1}},
      {"actions", {0, 1}},
      {"epsilon", 0.0},
      {"delta", 1.0},
      {"phi", "table"},
      {"phi_table", {0, 1}},
  };
  const Codebook weak = Codebook::from_json(j);
  CHECK_FALSE(validate(weak).margin.pass);  // not Delta-separable, deliberately
  const MixtureInstance weak_mix = mixture(weak, Dist::uniform(1));
  const SoftLinkReport path = soft_link_slack(weak_mix, bsc, ident);
  CHECK(path.zeta == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(path.multiplicative_floor == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(path.additive_floor == doctest::Approx(path.exact_floor - 1.0).epsilon(1e-15));
  CHECK(path.risk >= path.multiplicative_floor - 1e-12);
}

TEST_CASE("soft link on a perturbed mse book tracks the definition") {
  Codebook mse = Codebook::build_mse_packing(grid_1d({0.0, 0.5, 1.0}), 1.0, 1.0);
  // misdeclare the margin so interior actions fall inside it
  mse.set_delta(1.0);
  const MixtureInstance mix = mixture(mse, Dist::uniform(1));
  // |U| = 3 grid points; map H = U, Y = H with mild noise
  const CascadeChannel cascade({Kernel::symmetric(3, 0.2)}, {Kernel::identity(3)});
  // decoder that outputs the midpoint action (index 1) on some observations
  const DecoderTable pi(3, 1, {0, 1, 2});
  const SoftLinkReport r = soft_link_slack(mix, cascade, pi);
  CHECK(r.zeta > 0.0);
  CHECK(r.additive_floor == doctest::Approx(r.exact_floor - r.zeta).epsilon(1e-12));
  CHECK(r.multiplicative_floor ==
        doctest::Approx(r.exact_floor * (1.0 - r.zeta)).epsilon(1e-12));
  // the slackened converse still holds for the true risk
  CHECK(r.risk >= r.additive_floor - 1e-9);
  CHECK(r.risk >= r.multiplicative_floor - 1e-9);
}

TEST_CASE("codebook json round trips preserve content") {
  for (const Codebook& b :
       {Codebook::build_classification(3), Codebook::build_ranking(3),
        Codebook::build_mse_packing(grid_1d({0.0, 1.0, 2.0, 3.0}), 2.0, 2.0)}) {
    const Codebook back = Codebook::from_json(b.to_json());
    CHECK(back.M() == b.M());
    CHECK(back.epsilon() == b.epsilon());
    CHECK(back.delta() == b.delta());
    for (std::size_t u = 0; u < b.u_size(); ++u) {
      for (std::size_t a = 0; a < b.action_size(); ++a) {
        CHECK(back.loss(u, a) == b.loss(u, a));
      }
    }
    for (std::size_t a = 0; a < b.action_size(); ++a) CHECK(back.phi(a, 0) == b.phi(a, 0));
  }

  // corrupted books survive the round trip (prototypes/actions are authoritative)
  Codebook corrupted = Codebook::build_classification(3);
  corrupted.set_action(0, 2);
  const Codebook back = Codebook::from_json(corrupted.to_json());
  CHECK(back.action(0) == 2);
  CHECK_FALSE(validate(back).pass);

  // loaded book with nonzero epsilon: validated, never constructed
  nlohmann::json j = Codebook::build_classification(3).to_json();
  j["epsilon"] = 0.25;
  j["delta"] = 0.5;
  const Codebook eps = Codebook::from_json(j);
  CHECK(eps.epsilon() == 0.25);
  const ValidationReport r = validate(eps);
  CHECK(r.pass);  // 0-1 losses clear the relaxed margin 0.75 easily
  CHECK(r.to_json().at("pass").get<bool>());
}

TEST_CASE("validation report json carries worst slacks") {
  const ValidationReport r = validate(Codebook::build_classification(4));
  const nlohmann::json j = r.to_json();
  CHECK(j.at("diagonal").at("worst_slack").get<double>() == 0.0);  // eps - 0 = 0
  CHECK(j.at("margin").at("worst_slack").get<double>() == 0.0);    // 1 - (0+1) = 0
  CHECK(j.at("link").at("worst_slack").get<double>() == 0.0);
  CHECK(j.at("pass").get<bool>());
}
