#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "capint/bounds.hpp"
#include "capint/config.hpp"
#include "capint/learner.hpp"

namespace capint::experiment {

struct SweepRow {
  std::size_t point = 0;  // grid index
  std::size_t m = 0;
  std::size_t M = 0;
  double lambda = 0.0;
  double delta_margin = 0.0;  // codebook delta
  double epsilon = 0.0;

  double info_exact = 0.0;     // I(U;Y|S)
  double capacity = 0.0;       // budget fed to the capacity floor variant
  bool capacity_measured = false;
  double i_us = 0.0;

  double floor_exact = 0.0;
  double floor_capacity = 0.0;
  double floor = 0.0;  // operative

  double bayes_risk = 0.0;
  double bayes_index_error = 0.0;

  std::size_t replicates = 0;
  double mean_emp_risk = 0.0;
  double mean_kl = 0.0;
  double mean_ceiling = 0.0;
  double mean_posterior_risk = 0.0;
  double coverage = 0.0;  // fraction of replicates with posterior risk <= ceiling

  bool floor_sound = false;     // floor_exact <= bayes_risk + 1e-9 (hard gate)
  bool interval_valid = false;  // floor <= mean ceiling

  std::optional<learner::InfoAudit> audit;  // present when the budget allows
  std::string error;                        // nonempty: the grid point aborted

  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

// Evaluates one grid point: floors, Bayes oracle, replicate posteriors and
// ceilings, plus the exact information audit when the enumeration budget
// allows. Throws on module errors; the sweep driver catches per point.
// m_book = 0 keeps the configured codebook size; empty capacity / lambda fall
// back to the measured average capacity / configured lambda.
SweepRow evaluate_point(const ExperimentConfig& cfg, std::size_t point,
                        std::size_t m, std::optional<double> capacity,
                        std::size_t m_book, std::optional<double> lambda);

struct RunArtifacts {
  std::vector<SweepRow> rows;
  nlohmann::json summary;
  std::string csv_path, json_path, log_path;
};

// Executes the full sweep grid; any module error aborts its grid point,
// lands in that row's `error`, and the run continues. Writes sweep.csv,
// sweep.json and run.log under the output directory. Location precedence:
// output_override argument, then CAPINT_OUTPUT_DIR, then the config path; the
// config echo inside sweep.json is never rewritten, so redirecting output
// keeps artifacts byte-identical. Deterministic given (config, seed).
RunArtifacts run(const ExperimentConfig& cfg, const std::string& output_override = "");

struct VerifyCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  std::size_t passed = 0, failed = 0;
  bool pass = false;

  nlohmann::json to_json() const;
};

// Full invariant suite on the configured instance: data-processing, chain
// rule, KL decomposition, capacity control, compression lemmas, the
// loss-index link, the tower identity, floor m-independence, floor/ceiling
// monotonicity, and interval soundness.
VerifyReport verify(const ExperimentConfig& cfg);

}  // namespace capint::experiment
