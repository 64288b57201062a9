#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "capint/channel.hpp"
#include "capint/codebook.hpp"
#include "capint/learner.hpp"

namespace capint::experiment {

// Codebook recipe; rebuilt per grid point so the M axis can vary it.
struct CodebookSpec {
  std::string kind;  // "classification" | "ranking" | "mse_packing"
  std::size_t M = 2;
  std::size_t n = 3;
  std::vector<std::vector<double>> points;
  double r = 0.0, tau = 0.0;

  // m_override = 0 keeps the configured size; only classification books can
  // be resized by the sweep.
  codebook::Codebook build(std::size_t m_override = 0) const;
};

// One kernel, sized at build time so sized-by-alphabet kinds follow the
// codebook's value alphabet across an M sweep.
struct KernelSpec {
  std::string kind;  // "identity" | "uniform" | "symmetric" | "constant" | "matrix"
  double flip = 0.0;
  std::size_t out = 0;  // 0 means square
  std::size_t target = 0;
  std::vector<std::vector<double>> rows;

  prob::Kernel build(std::size_t in) const;
};

struct CascadeSpec {
  std::vector<KernelSpec> cog, art;  // one entry per context

  channel::CascadeChannel build(std::size_t u_size) const;
};

// Optional capacity families; absent means singleton families holding the
// realized kernels.
struct FamilySpec {
  std::string kind;  // "cardinality_bounded" | "enumerated" | "noisy_parametric"
  std::size_t k = 0;
  std::vector<KernelSpec> kernels;
  std::vector<double> params;

  channel::ChannelFamily build(std::size_t in) const;
};

struct FamiliesSpec {
  std::vector<FamilySpec> cog, art;
};

struct LearnerSpec {
  std::string hypotheses = "all_decoders";            // or "explicit"
  std::vector<std::vector<std::size_t>> tables;       // explicit decoder tables
  std::vector<double> prior_masses;                   // empty means uniform
  std::string rule = "gibbs";                         // "gibbs" | "map_smoothed"
  double lambda = 1.0;
  double gamma = 0.0;

  learner::EnumeratedLearner build(std::size_t y_size, std::size_t s_size,
                                   std::size_t action_size,
                                   std::optional<double> lambda_override = {}) const;
};

struct ExperimentConfig {
  CodebookSpec codebook;
  std::vector<double> context_law;
  CascadeSpec cascade;
  std::optional<FamiliesSpec> families;
  LearnerSpec learner;

  std::vector<std::size_t> m_axis = {100};
  std::vector<double> capacity_axis;  // empty: use the measured average capacity
  std::vector<std::size_t> m_codebook_axis;  // empty: configured book size
  std::vector<double> lambda_axis;           // empty: configured lambda

  std::size_t replicates = 1;
  double delta = 0.05;
  std::optional<double> eta;
  std::uint64_t seed = 0;
  std::string output = "out";

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
  nlohmann::json to_json() const;
};

}  // namespace capint::experiment
