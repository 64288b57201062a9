// Command-line front end: one subcommand per library operation, JSON on
// stdout. Exit codes: 0 ok, 1 usage or bad config, 2 invariant failure,
// 3 resource limit.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "capint/bounds.hpp"
#include "capint/config.hpp"
#include "capint/runner.hpp"

namespace {

using nlohmann::json;
namespace capx = capint::experiment;

struct Instance {
  capint::codebook::MixtureInstance mix;
  capint::channel::CascadeChannel cascade;
};

Instance build(const capx::ExperimentConfig& cfg) {
  capint::codebook::Codebook book = cfg.codebook.build();
  capint::codebook::MixtureInstance mix =
      capint::codebook::mixture(book, capint::prob::Dist(cfg.context_law));
  capint::channel::CascadeChannel cascade = cfg.cascade.build(book.u_size());
  return {std::move(mix), std::move(cascade)};
}

int cmd_capacity(const std::string& path) {
  const capx::ExperimentConfig cfg = capx::ExperimentConfig::load(path);
  Instance inst = build(cfg);
  std::vector<capint::channel::ChannelFamily> cog_f, art_f;
  if (cfg.families) {
    for (const capx::FamilySpec& f : cfg.families->cog) {
      cog_f.push_back(f.build(inst.cascade.u_size()));
    }
    for (const capx::FamilySpec& f : cfg.families->art) {
      art_f.push_back(f.build(inst.cascade.h_size()));
    }
  } else {
    for (std::size_t s = 0; s < inst.cascade.contexts(); ++s) {
      cog_f.push_back(capint::channel::EnumeratedSet{{inst.cascade.cog(s)}});
      art_f.push_back(capint::channel::EnumeratedSet{{inst.cascade.art(s)}});
    }
  }
  const capint::channel::CapacityReport rep =
      capint::channel::total_capacity(cog_f, art_f, inst.mix.us);
  json per = json::array();
  for (const auto& c : rep.per_context) {
    per.push_back({{"c_cog", c.c_cog}, {"c_art", c.c_art}, {"c_tot", c.c_tot}});
  }
  const json out{{"per_context", per},
                 {"weights", rep.weights},
                 {"skipped", rep.skipped},
                 {"average", rep.average},
                 {"families", cfg.families ? "configured" : "realized"}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_codebook(const std::string& path) {
  const capx::ExperimentConfig cfg = capx::ExperimentConfig::load(path);
  const capint::codebook::Codebook book = cfg.codebook.build();
  const capint::codebook::ValidationReport val =
      capint::codebook::validate(book, cfg.context_law.size());
  const json out{{"codebook", book.to_json()}, {"validation", val.to_json()}};
  std::cout << out.dump(2) << '\n';
  return val.pass ? 0 : 2;
}

int cmd_floor(std::size_t M, double delta, double epsilon, double info) {
  const double floor = capint::bounds::fano_floor({M, delta, epsilon, info, "cli"});
  const json out{
      {"M", M}, {"delta", delta}, {"epsilon", epsilon}, {"info", info}, {"floor", floor}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_ceiling(double emp, double kl, std::size_t m, double delta) {
  capint::bounds::CeilingInputs ci;
  ci.emp_risk = emp;
  ci.kl = kl;
  ci.m = m;
  ci.delta_conf = delta;
  const double ceiling = capint::bounds::pacbayes_ceiling(ci);
  const json out{
      {"emp_risk", emp}, {"kl", kl}, {"m", m}, {"delta", delta}, {"ceiling", ceiling}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_interval(const std::string& path) {
  const capx::ExperimentConfig cfg = capx::ExperimentConfig::load(path);
  const std::optional<double> cap =
      cfg.capacity_axis.empty() ? std::optional<double>{} : cfg.capacity_axis.front();
  const std::size_t m_book = cfg.m_codebook_axis.empty() ? 0 : cfg.m_codebook_axis.front();
  const std::optional<double> lam =
      cfg.lambda_axis.empty() ? std::optional<double>{} : cfg.lambda_axis.front();
  const capx::SweepRow row =
      capx::evaluate_point(cfg, 0, cfg.m_axis.front(), cap, m_book, lam);
  std::cout << row.to_json().dump(2) << '\n';
  return row.floor_sound ? 0 : 2;
}

int cmd_verify(const std::string& path) {
  const capx::ExperimentConfig cfg = capx::ExperimentConfig::load(path);
  const capx::VerifyReport rep = capx::verify(cfg);
  std::cout << rep.to_json().dump(2) << '\n';
  return rep.pass ? 0 : 2;
}

int cmd_sweep(const std::string& path, const std::string& output) {
  const capx::ExperimentConfig cfg = capx::ExperimentConfig::load(path);
  const capx::RunArtifacts art = capx::run(cfg, output);
  json out = art.summary;
  out["csv"] = art.csv_path;
  out["json"] = art.json_path;
  out["log"] = art.log_path;
  std::cout << out.dump(2) << '\n';
  const auto gate = art.summary.at("floor_gate_failures").get<std::size_t>();
  return gate == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"capint: capacity-coupled alignment performance intervals"};
  app.require_subcommand(1);

  std::string cfg_capacity, cfg_codebook, cfg_interval, cfg_verify, cfg_sweep;
  std::string sweep_output;
  std::size_t floor_M = 2, ceil_m = 1;
  double floor_delta = 1.0, floor_eps = 0.0, floor_info = 0.0;
  double ceil_emp = 0.0, ceil_kl = 0.0, ceil_delta = 0.05;

  CLI::App* capacity = app.add_subcommand("capacity", "Per-context and average capacity");
  capacity->add_option("--config", cfg_capacity, "Experiment config JSON")->required();

  CLI::App* codebook = app.add_subcommand("codebook", "Build and validate the codebook");
  codebook->add_option("--config", cfg_codebook, "Experiment config JSON")->required();

  CLI::App* floor = app.add_subcommand("floor", "Fano-style performance floor");
  floor->add_option("--M", floor_M, "Codebook size")->required();
  floor->add_option("--delta", floor_delta, "Separation margin")->required();
  floor->add_option("--epsilon", floor_eps, "Diagonal slack")->required();
  floor->add_option("--info", floor_info, "Information budget in nats")->required();

  CLI::App* ceiling = app.add_subcommand("ceiling", "PAC-Bayes performance ceiling");
  ceiling->add_option("--emp", ceil_emp, "Posterior empirical risk")->required();
  ceiling->add_option("--kl", ceil_kl, "KL(posterior || prior)")->required();
  ceiling->add_option("--m", ceil_m, "Sample count")->required();
  ceiling->add_option("--delta", ceil_delta, "Confidence level");

  CLI::App* interval = app.add_subcommand("interval", "One grid point: floor, risk, ceiling");
  interval->add_option("--config", cfg_interval, "Experiment config JSON")->required();

  CLI::App* verify = app.add_subcommand("verify", "Run the full invariant suite");
  verify->add_option("--config", cfg_verify, "Experiment config JSON")->required();

  CLI::App* sweep = app.add_subcommand("sweep", "Run the sweep grid and write artifacts");
  sweep->add_option("--config", cfg_sweep, "Experiment config JSON")->required();
  sweep->add_option("--output", sweep_output, "Output directory (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // --help is 0; every parse failure is usage
  }

  try {
    if (capacity->parsed()) return cmd_capacity(cfg_capacity);
    if (codebook->parsed()) return cmd_codebook(cfg_codebook);
    if (floor->parsed()) return cmd_floor(floor_M, floor_delta, floor_eps, floor_info);
    if (ceiling->parsed()) return cmd_ceiling(ceil_emp, ceil_kl, ceil_m, ceil_delta);
    if (interval->parsed()) return cmd_interval(cfg_interval);
    if (verify->parsed()) return cmd_verify(cfg_verify);
    if (sweep->parsed()) return cmd_sweep(cfg_sweep, sweep_output);
  } catch (const capint::resource_limit_error& e) {
    std::cerr << "resource limit: " << e.what() << '\n';
    return 3;
  } catch (const capint::domain_error& e) {
    std::cerr << "invariant failure: " << e.what() << '\n';
    return 2;
  } catch (const capint::validation_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
