#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "capint/errors.hpp"

namespace capint::bounds {

// Inputs to the Fano floor. `info` is either the exact I(U;Y|S) of the
// instance (tighter) or a capacity budget standing in for it (looser); both
// feed the same formula. The algebraic domain of `info` extends down to
// -ln 2 so that required_capacity() round-trips; physical callers pass >= 0.
struct FloorInputs {
  std::size_t M = 2;
  double delta = 1.0;
  double epsilon = 0.0;
  double info = 0.0;                // nats
  std::string provenance = "exact";  // "exact" | "capacity-budget"
};

// (eps+delta) * max(0, 1 - (info + ln 2)/ln M). No m anywhere: the floor is
// sample-size independent by construction.
double fano_floor(const FloorInputs& f);

struct WallBook {
  std::size_t M;
  double delta;
  double epsilon;
};

struct WallResult {
  double value = 0.0;
  std::size_t argmax = 0;          // index into the book list
  std::vector<double> per_book;    // individual floors at the shared capacity
};

// max over codebooks of the Fano floor at the given capacity; ties resolve
// to the smallest M (then first occurrence).
WallResult information_wall(double capacity, const std::vector<WallBook>& books);

struct CeilingInputs {
  double emp_risk = 0.0;   // observable empirical risk, [0,1]
  double kl = 0.0;         // KL(P||Q) in nats
  std::size_t m = 1;       // sample count
  double delta_conf = 0.05;
  std::optional<double> eta;  // Markov-lift slack; failure prob becomes delta+eta
  // expected-KL budget terms (Capacity-Aware Upper Bound)
  double cbar = 0.0;      // average total capacity, nats
  double ius = 0.0;       // I(U;S), nats
  double rho = 0.0;       // residual information, nats
  double kl_prior = 0.0;  // KL(p(theta)||Q), nats
  std::string kl_provenance = "measured";  // "measured" | "budgeted"
};

// emp_risk + sqrt((kl + ln(1/delta_conf)) / (2m)).
double pacbayes_ceiling(const CeilingInputs& c);

// m*cbar + m*ius + rho + kl_prior; controls E_D[KL(P||Q)], not any single draw.
double kl_budget(std::size_t m, double cbar, double ius, double rho, double kl_prior);

// Markov: with probability >= 1 - eta, KL <= expected_kl / eta.
double markov_lift(double expected_kl, double eta);

// High-probability capacity-aware ceiling: the expected-KL budget lifted by
// eta, then fed through the PAC-Bayes formula; holds with failure
// probability delta_conf + eta.
struct CapacityCeiling {
  double expected_budget = 0.0;  // kl_budget(...)
  double lifted_kl = 0.0;        // expected_budget / eta
  double ceiling = 0.0;
  double failure_prob = 0.0;     // delta_conf + eta
};
CapacityCeiling capacity_highprob_ceiling(const CeilingInputs& c);

struct RequiredCapacity {
  double nats = 0.0;
  bool vacuous = false;  // negative: any capacity meets the target
};

// (1 - r/(eps+delta)) ln M - ln 2; inverse of the floor at fixed (M,delta,eps).
RequiredCapacity required_capacity(double r, std::size_t M, double delta, double epsilon);

// alpha * obs_bound + beta. With the canonical observable loss the transfer
// must be the identity (alpha, beta) = (1, 0); enforced when flagged.
double risk_transfer(double alpha, double beta, double obs_bound, bool canonical_loss = false);

struct BoundReport {
  std::optional<FloorInputs> floor_exact_inputs;
  std::optional<FloorInputs> floor_capacity_inputs;
  std::optional<double> floor_exact;     // info = I(U;Y|S)
  std::optional<double> floor_capacity;  // info = capacity budget
  double floor = 0.0;                    // operative: the tightest sound variant
  CeilingInputs ceiling_inputs;
  double ceiling = 0.0;
  bool interval_valid = false;  // floor <= ceiling

  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

// Evaluates whichever floor variants are supplied plus the ceiling; at least
// one floor variant is required.
BoundReport bound_report(const std::optional<FloorInputs>& exact,
                         const std::optional<FloorInputs>& capacity,
                         const CeilingInputs& c);

}  // namespace capint::bounds
