#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "capint/channel.hpp"
#include "capint/info.hpp"

namespace capint::codebook {

using channel::CascadeChannel;
using prob::Dist;
using prob::JointTable;

enum class LossKind { ZeroOne, PairwiseRanking, TruncatedMSE, Table };
enum class PhiKind { PredictedLabel, PredictedOrder, NearestPrototypeVoronoi, Table };

// Deterministic decoder pi(y, s) -> action index.
class DecoderTable {
 public:
  DecoderTable(std::size_t y_size, std::size_t s_size, std::vector<std::size_t> action);

  std::size_t y_size() const { return y_size_; }
  std::size_t s_size() const { return s_size_; }
  std::size_t operator()(std::size_t y, std::size_t s) const {
    return action_.at(y * s_size_ + s);
  }

 private:
  std::size_t y_size_, s_size_;
  std::vector<std::size_t> action_;
};

// Delta-separable codebook: M prototypes u^(i) (indices into the value
// alphabet) paired with actions a^(i), a loss table l(u,a) in [0,1], and an
// index decoder phi(a,s). Prototypes are S-independent here; only the link
// map phi may vary with the context.
class Codebook {
 public:
  static Codebook build_classification(std::size_t M);
  static Codebook build_ranking(std::size_t n);  // M = n!, 2 <= n <= 6
  static Codebook build_mse_packing(std::vector<std::vector<double>> points, double r,
                                    double tau);

  std::size_t M() const { return prototypes_.size(); }
  std::size_t u_size() const { return u_size_; }
  std::size_t action_size() const { return action_size_; }
  double epsilon() const { return epsilon_; }
  double delta() const { return delta_; }
  LossKind loss_kind() const { return kind_; }
  PhiKind phi_kind() const { return phi_kind_; }

  std::size_t prototype(std::size_t i) const { return prototypes_.at(i); }
  std::size_t action(std::size_t i) const { return actions_.at(i); }
  double loss(std::size_t u, std::size_t a) const { return loss_.at(u * action_size_ + a); }
  // Index decoder; context-independent for all built-in kinds.
  std::size_t phi(std::size_t a, std::size_t /*s*/) const { return phi_table_.at(a); }

  // Grid coordinates (TruncatedMSE only).
  const std::vector<std::vector<double>>& points() const { return points_; }
  double separation() const { return r_; }
  double truncation() const { return tau_; }

  // Negative-control mutators: swap an action or misdeclare margins, then
  // re-run validate() to watch the right condition fail.
  void set_action(std::size_t i, std::size_t a);
  void set_epsilon(double epsilon);
  void set_delta(double delta);

  nlohmann::json to_json() const;
  static Codebook from_json(const nlohmann::json& j);

 private:
  Codebook() = default;
  void check_shape() const;

  LossKind kind_ = LossKind::Table;
  PhiKind phi_kind_ = PhiKind::Table;
  std::size_t u_size_ = 0, action_size_ = 0;
  std::vector<std::size_t> prototypes_, actions_;
  double epsilon_ = 0.0, delta_ = 1.0;
  std::vector<double> loss_;            // u_size x action_size, row-major
  std::vector<std::size_t> phi_table_;  // per action
  std::size_t n_ = 0;                   // ranking order count
  double r_ = 0.0, tau_ = 0.0;          // mse packing parameters
  std::vector<std::vector<double>> points_;
};

struct ConditionReport {
  double worst_slack = 0.0;
  bool pass = true;
  // offending triples; (i,i,0) diagonal, (j,i,0) margin, (a,s,i) link
  std::vector<std::array<std::size_t, 3>> failures;
};

struct ValidationReport {
  ConditionReport diagonal;  // l(u^(i), a^(i)) <= epsilon
  ConditionReport margin;    // l(u^(j), a^(i)) >= epsilon + delta, j != i
  ConditionReport link;      // phi(a,s) != i  =>  l(u^(i), a) >= epsilon + delta
  bool pass = false;
  nlohmann::json to_json() const;
};

// Exhaustive check of the two codebook conditions and the loss-index link
// over the full action x context x index grid.
ValidationReport validate(const Codebook& book, std::size_t contexts = 1);

// The converse's Bayes setting: J ~ Uniform[M] independent of S, U = u^(J).
struct MixtureInstance {
  Codebook book;
  Dist context_law;
  JointTable jus;  // p(j,u,s), axes "j","u","s"
  JointTable us;   // p(u,s) marginal, handed to the channel layer
  double h_j_given_s;
  double i_js;
};

// Certifies H(J|S) = ln M and I(J;S) = 0 within 1e-12; throws otherwise.
MixtureInstance mixture(const Codebook& book, const Dist& context_law);

// Canonical observable loss l*(y,s,a) = E[l(U,a) | Y=y, S=s]. Cells with
// P(y,s) = 0 are undefined and excluded from every risk sum.
class ObsLossTable {
 public:
  ObsLossTable(std::size_t y_size, std::size_t s_size, std::size_t action_size,
               std::vector<double> values, std::vector<char> defined);

  std::size_t y_size() const { return y_size_; }
  std::size_t s_size() const { return s_size_; }
  std::size_t action_size() const { return action_size_; }
  bool defined(std::size_t y, std::size_t s) const { return defined_.at(y * s_size_ + s) != 0; }
  double value(std::size_t y, std::size_t s, std::size_t a) const;  // throws if undefined

 private:
  std::size_t y_size_, s_size_, action_size_;
  std::vector<double> values_;
  std::vector<char> defined_;
};

ObsLossTable canonical_observable_loss(const MixtureInstance& mix,
                                       const CascadeChannel& cascade);

// Exact law of (J, S, Y) under mixture x cascade, axes "j","s","y".
JointTable index_output_joint(const MixtureInstance& mix, const CascadeChannel& cascade);

// E[l(U, pi(Y,S))] under mixture x cascade, exact enumeration.
double decoder_risk(const MixtureInstance& mix, const CascadeChannel& cascade,
                    const DecoderTable& pi);

// P{ phi(pi(Y,S), S) != J }.
double misindex_probability(const MixtureInstance& mix, const CascadeChannel& cascade,
                            const DecoderTable& pi);

// | E[l*(Y,S,pi(Y,S))] - E[l(U,pi(Y,S))] |, the tower-property residual.
double tower_identity_gap(const ObsLossTable& obs, const MixtureInstance& mix,
                          const CascadeChannel& cascade, const DecoderTable& pi);

struct SoftLinkReport {
  double zeta = 0.0;                 // P{ l(u^(J), A) < eps+delta | phi(A,S) != J }
  double p_mis = 0.0;                // P{ phi(A,S) != J }
  double risk = 0.0;                 // E[l(U, A)], A = pi(Y,S)
  double exact_floor = 0.0;          // (eps+delta) * p_mis
  double additive_floor = 0.0;       // exact_floor - zeta
  double multiplicative_floor = 0.0; // exact_floor * (1 - zeta)
  bool conditioning_empty = false;   // p_mis = 0: zeta defined as 0
};

SoftLinkReport soft_link_slack(const MixtureInstance& mix, const CascadeChannel& cascade,
                               const DecoderTable& pi);

}  // namespace capint::codebook
