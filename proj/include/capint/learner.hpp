#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "capint/channel.hpp"
#include "capint/codebook.hpp"

namespace capint::learner {

using channel::CascadeChannel;
using channel::ObservedSample;
using codebook::DecoderTable;
using codebook::MixtureInstance;
using codebook::ObsLossTable;
using prob::Dist;

enum class PosteriorRule { Gibbs, MapSmoothed };

// Finite hypothesis class of decoder tables with a prior and a posterior
// map. Immutable after construction; every posterior it emits is a valid
// distribution over the class.
class EnumeratedLearner {
 public:
  // Gibbs: P(theta|D) proportional to Q(theta) exp(-lambda m Rhat(theta)).
  // MapSmoothed: (1-gamma) point mass on the empirical minimizer + gamma Q.
  EnumeratedLearner(std::vector<DecoderTable> hypotheses, Dist prior, PosteriorRule rule,
                    double lambda, double gamma = 0.0);

  std::size_t size() const { return hypotheses_.size(); }
  const DecoderTable& hypothesis(std::size_t i) const { return hypotheses_.at(i); }
  const std::vector<DecoderTable>& hypotheses() const { return hypotheses_; }
  const Dist& prior() const { return prior_; }
  PosteriorRule rule() const { return rule_; }
  double lambda() const { return lambda_; }
  double gamma() const { return gamma_; }

  Dist posterior(std::span<const ObservedSample> data, const ObsLossTable& obs) const;

  nlohmann::json to_json() const;

 private:
  std::vector<DecoderTable> hypotheses_;
  Dist prior_;
  PosteriorRule rule_;
  double lambda_, gamma_;
};

// Every decoder on the (y,s) grid, ordered lexicographically by cell with
// cell (0,0) most significant. Guarded: action_size^(y_size*s_size) <= 4096.
std::vector<DecoderTable> all_decoders(std::size_t y_size, std::size_t s_size,
                                       std::size_t action_size);

struct OracleDecoder {
  DecoderTable table;
  double risk = 0.0;         // exact E[l(U, pi(Y,S))]
  double index_error = 0.0;  // P{ phi(pi(Y,S), S) != J }
};

// Exhaustive per-cell argmin of E[l(U,a) | y,s]; ties go to the lowest
// action index, zero-mass cells get action 0.
OracleDecoder bayes_optimal_decoder(const MixtureInstance& mix, const CascadeChannel& cascade);

// (1/m) sum_i obs(y_i, s_i, pi(y_i, s_i)).
double empirical_obs_risk(const DecoderTable& pi, std::span<const ObservedSample> data,
                          const ObsLossTable& obs);

// The Gibbs formula with the learner's lambda and prior, regardless of the
// learner's configured rule; log-sum-exp normalized. lambda = 0 returns Q.
Dist gibbs_posterior(const EnumeratedLearner& learner, std::span<const ObservedSample> data,
                     const ObsLossTable& obs);

struct InfoAudit {
  double i_d_theta = 0.0;    // I(D; theta)
  double i_um_theta = 0.0;   // I(U^m; theta)
  double i_residual = 0.0;   // I(D; theta | U^m)
  double e_kl = 0.0;         // E_D[KL(P||Q)]
  double kl_marginal = 0.0;  // KL(p(theta) || Q)
  double cbar = 0.0;         // average realized total capacity, nats
  double i_us = 0.0;         // I(U;S), nats
  std::size_t m = 0;
  std::size_t u_size = 0, s_size = 0, y_size = 0, theta_size = 0;
  double identity_slack = 0.0;   // |e_kl - i_d_theta - kl_marginal|
  double chain_slack = 0.0;      // |i_d_theta - i_um_theta - i_residual|
  double capacity_budget = 0.0;  // m cbar + m I(U;S)
  double capacity_slack = 0.0;   // capacity_budget - i_um_theta

  nlohmann::json to_json() const;
};

// Exact joint of (dataset, theta) by full enumeration of the m-fold product
// space; no sampling. Computes every InfoAudit field from independent sums
// and certifies the KL-decomposition identity, the chain decomposition and
// capacity control, throwing domain_error past 1e-9. The enumerated space
// (|U||S||Y|)^m * |Theta| is capped at 1e7 cells.
InfoAudit enumerate_information(const EnumeratedLearner& learner, const MixtureInstance& mix,
                                const CascadeChannel& cascade, std::size_t m);

struct CompressionAudit {
  std::vector<std::size_t> representatives;  // ascending hypothesis indices
  std::vector<std::size_t> assignment;       // hypothesis -> representative slot
  std::vector<double> compressed;            // P_c over representative slots
  std::vector<double> prior_pushforward;     // Q_c
  double h_compressed = 0.0;                 // H of the compressed posterior
  double kl_original = 0.0;                  // KL(P||Q)
  double kl_compressed = 0.0;                // KL(P_c||Q_c)
  double entropy_slack = 0.0;                // ln K - h_compressed
  double kl_slack = 0.0;                     // kl_original - kl_compressed
  std::size_t codewords = 0;                 // effective K
  std::string note;                          // set when K exceeds |Theta|

  nlohmann::json to_json() const;
};

// Data-independent randomized quantizer over the hypothesis class: K
// representatives by greedy prior-mass farthest-point selection under the
// decoder-output Hamming metric, remaining hypotheses assigned by one seeded
// draw each with weight proportional to similarity. Certifies that the
// compressed entropy stays under ln K and that KL does not increase.
CompressionAudit compress_posterior(const EnumeratedLearner& learner, const Dist& posterior,
                                    std::size_t K, std::uint64_t seed);

enum class ResidualMechanism { Compression, Measured, Declared };

struct ResidualBound {
  double rho = 0.0;
  ResidualMechanism mechanism = ResidualMechanism::Declared;
  std::string tag;
};

// Compression: value is the codeword count K, rho = ln K. Measured /
// Declared: rho is the value itself.
ResidualBound residual_bound_in_use(ResidualMechanism mechanism, double value);

}  // namespace capint::learner
