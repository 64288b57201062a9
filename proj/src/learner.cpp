#include "capint/learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "capint/info.hpp"
#include "capint/rng.hpp"

namespace capint::learner {

namespace {

constexpr double kCertTol = 1e-9;
constexpr std::size_t kMaxHypothesisClass = 4096;
constexpr double kEnumBudget = 1e7;

// KL over raw mass vectors with 0 log 0 = 0; both sides need not be exactly
// normalized (accumulated pushforwards carry rounding drift).
double kl_span(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) {
      throw domain_error("enumerated KL: absolute continuity violated at atom " +
                         std::to_string(i));
    }
    s += p[i] * std::log(p[i] / q[i]);
  }
  return s;
}

}  // namespace

EnumeratedLearner::EnumeratedLearner(std::vector<DecoderTable> hypotheses, Dist prior,
                                     PosteriorRule rule, double lambda, double gamma)
    : hypotheses_(std::move(hypotheses)),
      prior_(std::move(prior)),
      rule_(rule),
      lambda_(lambda),
      gamma_(gamma) {
  if (hypotheses_.empty()) throw validation_error("EnumeratedLearner: empty hypothesis class");
  if (prior_.size() != hypotheses_.size()) {
    throw validation_error("EnumeratedLearner: prior size does not match the class");
  }
  for (const DecoderTable& h : hypotheses_) {
    if (h.y_size() != hypotheses_[0].y_size() || h.s_size() != hypotheses_[0].s_size()) {
      throw validation_error("EnumeratedLearner: hypotheses disagree on the (y,s) grid");
    }
  }
  if (!(lambda_ >= 0.0) || !std::isfinite(lambda_)) {
    throw validation_error("EnumeratedLearner: lambda must be finite and >= 0");
  }
  if (!(gamma_ >= 0.0 && gamma_ <= 1.0)) {
    throw validation_error("EnumeratedLearner: gamma must lie in [0,1]");
  }
}

Dist EnumeratedLearner::posterior(std::span<const ObservedSample> data,
                                  const ObsLossTable& obs) const {
  if (rule_ == PosteriorRule::Gibbs) return gibbs_posterior(*this, data, obs);

  // MAP over positive-prior hypotheses, smoothed toward the prior.
  std::size_t best = hypotheses_.size();
  double best_risk = 0.0;
  for (std::size_t i = 0; i < hypotheses_.size(); ++i) {
    if (prior_[i] <= 0.0) continue;
    const double r = empirical_obs_risk(hypotheses_[i], data, obs);
    if (best == hypotheses_.size() || r < best_risk) {
      best = i;
      best_risk = r;
    }
  }
  if (best == hypotheses_.size()) {
    throw validation_error("posterior: prior has no support");
  }
  std::vector<double> p(hypotheses_.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = gamma_ * prior_[i];
  p[best] += 1.0 - gamma_;
  return Dist(std::move(p));
}

nlohmann::json EnumeratedLearner::to_json() const {
  nlohmann::json tables = nlohmann::json::array();
  for (const DecoderTable& h : hypotheses_) {
    nlohmann::json actions = nlohmann::json::array();
    for (std::size_t y = 0; y < h.y_size(); ++y) {
      for (std::size_t s = 0; s < h.s_size(); ++s) actions.push_back(h(y, s));
    }
    tables.push_back(std::move(actions));
  }
  return {{"y_size", hypotheses_[0].y_size()},
          {"s_size", hypotheses_[0].s_size()},
          {"hypotheses", tables},
          {"prior", std::vector<double>(prior_.masses().begin(), prior_.masses().end())},
          {"rule", rule_ == PosteriorRule::Gibbs ? "gibbs" : "map_smoothed"},
          {"lambda", lambda_},
          {"gamma", gamma_}};
}

std::vector<DecoderTable> all_decoders(std::size_t y_size, std::size_t s_size,
                                       std::size_t action_size) {
  if (y_size == 0 || s_size == 0 || action_size == 0) {
    throw validation_error("all_decoders: empty alphabet");
  }
  const std::size_t cells = y_size * s_size;
  std::size_t count = 1;
  for (std::size_t c = 0; c < cells; ++c) {
    if (count > kMaxHypothesisClass / action_size) {
      throw resource_limit_error("all_decoders: class size exceeds " +
                                 std::to_string(kMaxHypothesisClass) +
                                 "; shrink the grid or the action alphabet");
    }
    count *= action_size;
  }
  std::vector<DecoderTable> out;
  out.reserve(count);
  for (std::size_t h = 0; h < count; ++h) {
    std::vector<std::size_t> actions(cells);
    std::size_t rem = h;
    for (std::size_t c = cells; c-- > 0;) {
      actions[c] = rem % action_size;
      rem /= action_size;
    }
    out.emplace_back(y_size, s_size, std::move(actions));
  }
  return out;
}

OracleDecoder bayes_optimal_decoder(const MixtureInstance& mix, const CascadeChannel& cascade) {
  const prob::JointTable jsy = codebook::index_output_joint(mix, cascade);
  const std::size_t M = mix.book.M();
  const std::size_t ns = mix.context_law.size();
  const std::size_t ny = cascade.y_size();
  const std::size_t na = mix.book.action_size();
  std::span<const double> p = jsy.masses();  // row-major (j,s,y)

  std::vector<std::size_t> actions(ny * ns, 0);
  for (std::size_t y = 0; y < ny; ++y) {
    for (std::size_t s = 0; s < ns; ++s) {
      double cell_mass = 0.0;
      for (std::size_t j = 0; j < M; ++j) cell_mass += p[(j * ns + s) * ny + y];
      if (cell_mass == 0.0) continue;
      std::size_t best = 0;
      double best_loss = 0.0;
      for (std::size_t a = 0; a < na; ++a) {
        double l = 0.0;
        for (std::size_t j = 0; j < M; ++j) {
          l += p[(j * ns + s) * ny + y] * mix.book.loss(mix.book.prototype(j), a);
        }
        if (a == 0 || l < best_loss) {
          best = a;
          best_loss = l;
        }
      }
      actions[y * ns + s] = best;
    }
  }
  DecoderTable table(ny, ns, std::move(actions));
  const double risk = codebook::decoder_risk(mix, cascade, table);
  const double err = codebook::misindex_probability(mix, cascade, table);
  return OracleDecoder{std::move(table), risk, err};
}

double empirical_obs_risk(const DecoderTable& pi, std::span<const ObservedSample> data,
                          const ObsLossTable& obs) {
  if (data.empty()) throw validation_error("empirical_obs_risk: empty dataset");
  if (pi.y_size() != obs.y_size() || pi.s_size() != obs.s_size()) {
    throw validation_error("empirical_obs_risk: decoder and loss table grids disagree");
  }
  double sum = 0.0;
  for (const ObservedSample& d : data) {
    if (d.y >= obs.y_size() || d.s >= obs.s_size()) {
      throw validation_error("empirical_obs_risk: sample outside the observed alphabet");
    }
    const std::size_t a = pi(d.y, d.s);
    if (a >= obs.action_size()) {
      throw validation_error("empirical_obs_risk: decoder action outside the loss table");
    }
    sum += obs.value(d.y, d.s, a);
  }
  return sum / static_cast<double>(data.size());
}

Dist gibbs_posterior(const EnumeratedLearner& learner, std::span<const ObservedSample> data,
                     const ObsLossTable& obs) {
  if (data.empty()) throw validation_error("gibbs_posterior: empty dataset");
  const Dist& q = learner.prior();
  const double scale = learner.lambda() * static_cast<double>(data.size());
  std::vector<double> logw(learner.size(), 0.0);
  double max_logw = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < learner.size(); ++i) {
    if (q[i] <= 0.0) continue;
    logw[i] = std::log(q[i]) - scale * empirical_obs_risk(learner.hypothesis(i), data, obs);
    max_logw = std::max(max_logw, logw[i]);
  }
  if (!std::isfinite(max_logw)) throw validation_error("gibbs_posterior: prior has no support");
  double z = 0.0;
  std::vector<double> p(learner.size(), 0.0);
  for (std::size_t i = 0; i < learner.size(); ++i) {
    if (q[i] <= 0.0) continue;
    p[i] = std::exp(logw[i] - max_logw);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return Dist(std::move(p));
}

namespace {

// Walks every positive-mass dataset of the m-fold product space, handing the
// visitor (mass, u-vector group id, posterior). Sample atoms are row-major
// (u,s,y); group ids are the base-|U| encoding of (u_1..u_m).
template <typename Visit>
void for_each_dataset(const EnumeratedLearner& learner, const ObsLossTable& obs,
                      const std::vector<double>& pusy, std::size_t nu, std::size_t ns,
                      std::size_t ny, std::size_t m, Visit&& visit) {
  const std::size_t A = nu * ns * ny;
  std::uint64_t n_data = 1;
  for (std::size_t i = 0; i < m; ++i) n_data *= A;

  std::vector<std::size_t> atom(m);
  std::vector<ObservedSample> data(m);
  for (std::uint64_t d = 0; d < n_data; ++d) {
    std::uint64_t rem = d;
    for (std::size_t i = m; i-- > 0;) {
      atom[i] = static_cast<std::size_t>(rem % A);
      rem /= A;
    }
    double mass = 1.0;
    std::uint64_t gid = 0;
    for (std::size_t i = 0; i < m && mass > 0.0; ++i) {
      mass *= pusy[atom[i]];
      const std::size_t u = atom[i] / (ns * ny);
      data[i] = {(atom[i] / ny) % ns, atom[i] % ny};
      gid = gid * nu + u;
    }
    if (mass <= 0.0) continue;
    visit(mass, gid, learner.posterior(data, obs));
  }
}

struct GroupAcc {
  double mass = 0.0;
  std::vector<double> weighted;  // sum of mass * posterior
};

}  // namespace

nlohmann::json InfoAudit::to_json() const {
  return {{"i_d_theta", i_d_theta},
          {"i_um_theta", i_um_theta},
          {"i_residual", i_residual},
          {"e_kl", e_kl},
          {"kl_marginal", kl_marginal},
          {"cbar", cbar},
          {"i_us", i_us},
          {"m", m},
          {"u_size", u_size},
          {"s_size", s_size},
          {"y_size", y_size},
          {"theta_size", theta_size},
          {"identity_slack", identity_slack},
          {"chain_slack", chain_slack},
          {"capacity_budget", capacity_budget},
          {"capacity_slack", capacity_slack}};
}

InfoAudit enumerate_information(const EnumeratedLearner& learner, const MixtureInstance& mix,
                                const CascadeChannel& cascade, std::size_t m) {
  if (m == 0) throw validation_error("enumerate_information: m must be >= 1");
  const std::size_t nu = mix.book.u_size();
  const std::size_t ns = mix.context_law.size();
  const std::size_t ny = cascade.y_size();
  const std::size_t ntheta = learner.size();
  if (learner.hypothesis(0).y_size() != ny || learner.hypothesis(0).s_size() != ns) {
    throw validation_error("enumerate_information: learner grid does not match the cascade");
  }

  const double cells = std::pow(static_cast<double>(nu * ns * ny), static_cast<double>(m)) *
                       static_cast<double>(ntheta);
  if (cells > kEnumBudget) {
    throw resource_limit_error(
        "enumerate_information: " + std::to_string(cells) +
        " enumerated cells exceed the 1e7 budget; reduce m or the alphabet sizes");
  }

  const ObsLossTable obs = codebook::canonical_observable_loss(mix, cascade);
  const prob::JointTable jsy = codebook::index_output_joint(mix, cascade);
  std::vector<double> pusy(nu * ns * ny, 0.0);
  {
    std::span<const double> pj = jsy.masses();  // row-major (j,s,y)
    for (std::size_t j = 0; j < mix.book.M(); ++j) {
      const std::size_t u = mix.book.prototype(j);
      for (std::size_t s = 0; s < ns; ++s) {
        for (std::size_t y = 0; y < ny; ++y) {
          pusy[(u * ns + s) * ny + y] += pj[(j * ns + s) * ny + y];
        }
      }
    }
  }

  // Pass 1: the theta marginal, per-u-vector mixtures, and E_D[KL(P||Q)].
  std::vector<double> pbar(ntheta, 0.0);
  std::map<std::uint64_t, GroupAcc> groups;
  double e_kl = 0.0;
  for_each_dataset(learner, obs, pusy, nu, ns, ny, m,
                   [&](double mass, std::uint64_t gid, const Dist& post) {
                     GroupAcc& g = groups[gid];
                     if (g.weighted.empty()) g.weighted.assign(ntheta, 0.0);
                     g.mass += mass;
                     for (std::size_t t = 0; t < ntheta; ++t) {
                       pbar[t] += mass * post[t];
                       g.weighted[t] += mass * post[t];
                     }
                     e_kl += mass * kl_span(post.masses(), learner.prior().masses());
                   });

  const double kl_marginal = kl_span(pbar, learner.prior().masses());
  double i_um = 0.0;
  for (auto& [gid, g] : groups) {
    for (double& v : g.weighted) v /= g.mass;  // now the conditional P(theta | u-vector)
    i_um += g.mass * kl_span(g.weighted, pbar);
  }

  // Pass 2: I(D;theta) against the marginal and the residual within groups.
  double i_d = 0.0, residual = 0.0;
  for_each_dataset(learner, obs, pusy, nu, ns, ny, m,
                   [&](double mass, std::uint64_t gid, const Dist& post) {
                     i_d += mass * kl_span(post.masses(), pbar);
                     residual += mass * kl_span(post.masses(), groups.at(gid).weighted);
                   });

  InfoAudit audit;
  audit.i_d_theta = prob::clamp_information(i_d);
  audit.i_um_theta = prob::clamp_information(i_um);
  audit.i_residual = prob::clamp_information(residual);
  audit.e_kl = prob::clamp_information(e_kl);
  audit.kl_marginal = prob::clamp_information(kl_marginal);
  audit.m = m;
  audit.u_size = nu;
  audit.s_size = ns;
  audit.y_size = ny;
  audit.theta_size = ntheta;
  audit.i_us = prob::mutual_information(mix.us, "u", "s");

  const prob::JointTable j4 = cascade.joint(mix.us);
  const auto uh = prob::conditional_mi(j4, "u", "h", "s");
  const auto hy = prob::conditional_mi(j4, "h", "y", "s");
  double cbar = 0.0;
  for (std::size_t s = 0; s < ns; ++s) {
    cbar += uh.weights[s] * std::min(uh.per_context[s], hy.per_context[s]);
  }
  audit.cbar = cbar;

  audit.identity_slack = std::abs(audit.e_kl - audit.i_d_theta - audit.kl_marginal);
  audit.chain_slack = std::abs(audit.i_d_theta - audit.i_um_theta - audit.i_residual);
  audit.capacity_budget = static_cast<double>(m) * cbar + static_cast<double>(m) * audit.i_us;
  audit.capacity_slack = audit.capacity_budget - audit.i_um_theta;

  if (audit.identity_slack > kCertTol) {
    throw domain_error("enumerate_information: KL decomposition identity violated by " +
                       std::to_string(audit.identity_slack));
  }
  if (audit.chain_slack > kCertTol) {
    throw domain_error("enumerate_information: chain decomposition violated by " +
                       std::to_string(audit.chain_slack));
  }
  if (audit.capacity_slack < -kCertTol) {
    throw domain_error("enumerate_information: capacity control violated by " +
                       std::to_string(-audit.capacity_slack));
  }
  return audit;
}

nlohmann::json CompressionAudit::to_json() const {
  return {{"representatives", representatives},
          {"assignment", assignment},
          {"compressed", compressed},
          {"prior_pushforward", prior_pushforward},
          {"h_compressed", h_compressed},
          {"kl_original", kl_original},
          {"kl_compressed", kl_compressed},
          {"entropy_slack", entropy_slack},
          {"kl_slack", kl_slack},
          {"codewords", codewords},
          {"note", note}};
}

CompressionAudit compress_posterior(const EnumeratedLearner& learner, const Dist& posterior,
                                    std::size_t K, std::uint64_t seed) {
  const std::size_t n = learner.size();
  if (posterior.size() != n) {
    throw validation_error("compress_posterior: posterior does not match the class");
  }
  if (K == 0) throw validation_error("compress_posterior: K must be >= 1");

  CompressionAudit audit;
  if (K > n) {
    audit.note = "codeword count exceeds the hypothesis class; identity quantizer used";
    K = n;
  }
  audit.codewords = K;

  const auto& hyp = learner.hypotheses();
  const std::size_t cells = hyp[0].y_size() * hyp[0].s_size();
  const auto dist = [&](std::size_t a, std::size_t b) {
    std::size_t diff = 0;
    for (std::size_t y = 0; y < hyp[a].y_size(); ++y) {
      for (std::size_t s = 0; s < hyp[a].s_size(); ++s) {
        diff += hyp[a](y, s) != hyp[b](y, s) ? 1 : 0;
      }
    }
    return static_cast<double>(diff) / static_cast<double>(cells);
  };

  // Greedy prior-mass farthest-point selection; ties keep the lowest index.
  const Dist& q = learner.prior();
  std::vector<char> chosen(n, 0);
  std::vector<std::size_t> reps;
  std::size_t first = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (q[i] > q[first]) first = i;
  }
  reps.push_back(first);
  chosen[first] = 1;
  std::vector<double> dmin(n);
  for (std::size_t i = 0; i < n; ++i) dmin[i] = dist(i, first);
  while (reps.size() < K) {
    std::size_t pick = n;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (chosen[i]) continue;
      const double score = q[i] * dmin[i];
      if (score > best) {
        best = score;
        pick = i;
      }
    }
    reps.push_back(pick);
    chosen[pick] = 1;
    for (std::size_t i = 0; i < n; ++i) dmin[i] = std::min(dmin[i], dist(i, pick));
  }
  std::sort(reps.begin(), reps.end());
  audit.representatives = reps;

  std::vector<std::size_t> slot_of(n, n);
  for (std::size_t k = 0; k < K; ++k) slot_of[reps[k]] = k;

  // Seeded similarity-proportional assignment of the non-representatives.
  audit.assignment.resize(n);
  rng::Sequence seq(seed);
  std::vector<double> w(K);
  for (std::size_t i = 0; i < n; ++i) {
    if (chosen[i]) {
      audit.assignment[i] = slot_of[i];
      continue;
    }
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      w[k] = std::max(0.0, 1.0 - dist(i, reps[k]));
      total += w[k];
    }
    if (total > 0.0) {
      for (double& v : w) v /= total;
      audit.assignment[i] = rng::categorical(w, seq.uniform());
    } else {
      std::size_t nearest = 0;
      for (std::size_t k = 1; k < K; ++k) {
        if (dist(i, reps[k]) < dist(i, reps[nearest])) nearest = k;
      }
      audit.assignment[i] = nearest;
    }
  }

  std::vector<double> pc(K, 0.0), qc(K, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    pc[audit.assignment[i]] += posterior[i];
    qc[audit.assignment[i]] += q[i];
  }
  audit.compressed = pc;
  audit.prior_pushforward = qc;
  audit.h_compressed = prob::entropy(Dist(std::move(pc)));
  audit.kl_original = prob::kl_divergence(posterior, q);
  audit.kl_compressed = prob::clamp_information(kl_span(audit.compressed, qc));
  audit.entropy_slack = std::log(static_cast<double>(K)) - audit.h_compressed;
  audit.kl_slack = audit.kl_original - audit.kl_compressed;

  if (audit.entropy_slack < -kCertTol) {
    throw domain_error("compress_posterior: compressed entropy exceeds ln K");
  }
  if (audit.kl_slack < -kCertTol) {
    throw domain_error("compress_posterior: KL increased under post-processing");
  }
  return audit;
}

ResidualBound residual_bound_in_use(ResidualMechanism mechanism, double value) {
  ResidualBound out;
  out.mechanism = mechanism;
  switch (mechanism) {
    case ResidualMechanism::Compression: {
      const double k = std::round(value);
      if (!(k >= 1.0) || std::abs(k - value) > 1e-9) {
        throw validation_error("residual_bound_in_use: compression needs an integer K >= 1");
      }
      out.rho = std::log(k);
      out.tag = "compression(K=" + std::to_string(static_cast<std::size_t>(k)) + ")";
      return out;
    }
    case ResidualMechanism::Measured:
      if (!(value >= 0.0)) {
        throw validation_error("residual_bound_in_use: measured residual must be >= 0");
      }
      out.rho = value;
      out.tag = "measured";
      return out;
    case ResidualMechanism::Declared:
      if (!(value >= 0.0)) {
        throw validation_error("residual_bound_in_use: declared rho must be >= 0");
      }
      out.rho = value;
      out.tag = "declared";
      return out;
  }
  throw validation_error("residual_bound_in_use: unknown mechanism");
}

}  // namespace capint::learner
