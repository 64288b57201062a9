#include "capint/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "capint/numfmt.hpp"
#include "capint/rng.hpp"

namespace capint::experiment {

namespace {

constexpr double kGateTol = 1e-9;
constexpr double kEnumBudget = 1e7;

using numfmt::format_double;

struct Instance {
  codebook::MixtureInstance mix;  // carries the codebook
  channel::CascadeChannel cascade;
  double info_exact = 0.0;  // I(U;Y|S)
  double i_us = 0.0;
  channel::CapacityReport capacity;
};

Instance build_instance(const ExperimentConfig& cfg, std::size_t m_override) {
  codebook::Codebook book = cfg.codebook.build(m_override);
  codebook::MixtureInstance mix = codebook::mixture(book, prob::Dist(cfg.context_law));
  channel::CascadeChannel cascade = cfg.cascade.build(book.u_size());

  std::vector<channel::ChannelFamily> cog_f, art_f;
  if (cfg.families) {
    for (const FamilySpec& f : cfg.families->cog) cog_f.push_back(f.build(cascade.u_size()));
    for (const FamilySpec& f : cfg.families->art) art_f.push_back(f.build(cascade.h_size()));
  } else {
    for (std::size_t s = 0; s < cascade.contexts(); ++s) {
      cog_f.push_back(channel::EnumeratedSet{{cascade.cog(s)}});
      art_f.push_back(channel::EnumeratedSet{{cascade.art(s)}});
    }
  }
  channel::CapacityReport cap = channel::total_capacity(cog_f, art_f, mix.us);

  const prob::JointTable usy = cascade.output_joint(mix.us);
  const double info = prob::conditional_mi(usy, "u", "y", "s").value;
  const double i_us = prob::mutual_information(mix.us, "u", "s");
  return Instance{std::move(mix), std::move(cascade), info, i_us, std::move(cap)};
}

std::vector<channel::ObservedSample> observed_samples(const channel::Dataset& ds) {
  std::vector<channel::ObservedSample> out;
  out.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out.push_back(ds.observed(i));
  return out;
}

}  // namespace

SweepRow evaluate_point(const ExperimentConfig& cfg, std::size_t point,
                        std::size_t m, std::optional<double> cap_value,
                        std::size_t m_book, std::optional<double> lambda) {
  SweepRow row;
  row.point = point;
  row.m = m;
  row.lambda = lambda.value_or(cfg.learner.lambda);
  {
    const Instance inst = build_instance(cfg, m_book);
    const codebook::Codebook& book = inst.mix.book;
    row.M = book.M();
    row.delta_margin = book.delta();
    row.epsilon = book.epsilon();
    row.info_exact = inst.info_exact;
    row.i_us = inst.i_us;
    row.capacity_measured = !cap_value.has_value();
    row.capacity = cap_value.value_or(inst.capacity.average);

    row.floor_exact = bounds::fano_floor(
        {book.M(), book.delta(), book.epsilon(), inst.info_exact, "exact"});
    row.floor_capacity = bounds::fano_floor(
        {book.M(), book.delta(), book.epsilon(), row.capacity, "capacity-budget"});
    row.floor = std::max(row.floor_exact, row.floor_capacity);

    const learner::OracleDecoder oracle = learner::bayes_optimal_decoder(inst.mix, inst.cascade);
    row.bayes_risk = oracle.risk;
    row.bayes_index_error = oracle.index_error;
    row.floor_sound = row.floor_exact <= oracle.risk + kGateTol;

    const learner::EnumeratedLearner lrn = cfg.learner.build(
        inst.cascade.y_size(), inst.cascade.contexts(), book.action_size(), lambda);
    const codebook::ObsLossTable obs =
        codebook::canonical_observable_loss(inst.mix, inst.cascade);
    std::vector<double> theta_risk(lrn.size());
    for (std::size_t t = 0; t < lrn.size(); ++t) {
      theta_risk[t] = codebook::decoder_risk(inst.mix, inst.cascade, lrn.hypothesis(t));
    }

    const std::uint64_t point_seed = rng::derive(cfg.seed, point);
    double sum_emp = 0.0, sum_kl = 0.0, sum_ceiling = 0.0, sum_prisk = 0.0;
    std::size_t covered = 0;
    for (std::size_t rep = 0; rep < cfg.replicates; ++rep) {
      const channel::Dataset ds =
          channel::sample_dataset(inst.mix.us, inst.cascade, m, rng::derive(point_seed, rep));
      const auto data = observed_samples(ds);
      const prob::Dist post = lrn.posterior(data, obs);
      double emp = 0.0, prisk = 0.0;
      for (std::size_t t = 0; t < lrn.size(); ++t) {
        if (post[t] == 0.0) continue;
        emp += post[t] * learner::empirical_obs_risk(lrn.hypothesis(t), data, obs);
        prisk += post[t] * theta_risk[t];
      }
      const double kl = prob::kl_divergence(post, lrn.prior());
      bounds::CeilingInputs ci;
      ci.emp_risk = emp;
      ci.kl = kl;
      ci.m = m;
      ci.delta_conf = cfg.delta;
      const double ceiling = bounds::pacbayes_ceiling(ci);
      sum_emp += emp;
      sum_kl += kl;
      sum_ceiling += ceiling;
      sum_prisk += prisk;
      if (prisk <= ceiling + 1e-12) ++covered;
    }
    const double n = static_cast<double>(cfg.replicates);
    row.replicates = cfg.replicates;
    row.mean_emp_risk = sum_emp / n;
    row.mean_kl = sum_kl / n;
    row.mean_ceiling = sum_ceiling / n;
    row.mean_posterior_risk = sum_prisk / n;
    row.coverage = static_cast<double>(covered) / n;
    row.interval_valid = row.floor <= row.mean_ceiling + 1e-12;

    const double cells =
        std::pow(static_cast<double>(book.u_size() * inst.cascade.contexts() *
                                     inst.cascade.y_size()),
                 static_cast<double>(m)) *
        static_cast<double>(lrn.size());
    if (m <= 3 && cells <= kEnumBudget) {
      row.audit = learner::enumerate_information(lrn, inst.mix, inst.cascade, m);
    }
  }
  return row;
}

nlohmann::json SweepRow::to_json() const {
  nlohmann::json j{{"point", point},
                   {"m", m},
                   {"M", M},
                   {"lambda", lambda},
                   {"delta", delta_margin},
                   {"epsilon", epsilon},
                   {"info_exact", info_exact},
                   {"capacity", capacity},
                   {"capacity_measured", capacity_measured},
                   {"i_us", i_us},
                   {"floor_exact", floor_exact},
                   {"floor_capacity", floor_capacity},
                   {"floor", floor},
                   {"bayes_risk", bayes_risk},
                   {"bayes_index_error", bayes_index_error},
                   {"replicates", replicates},
                   {"mean_emp_risk", mean_emp_risk},
                   {"mean_kl", mean_kl},
                   {"mean_ceiling", mean_ceiling},
                   {"mean_posterior_risk", mean_posterior_risk},
                   {"coverage", coverage},
                   {"floor_sound", floor_sound},
                   {"interval_valid", interval_valid}};
  j["audit"] = audit ? audit->to_json() : nlohmann::json(nullptr);
  j["error"] = error;
  return j;
}

std::string SweepRow::csv_header() {
  return "point,m,M,lambda,delta,epsilon,info_exact,capacity,capacity_measured,i_us,"
         "floor_exact,floor_capacity,floor,bayes_risk,bayes_index_error,replicates,"
         "mean_emp_risk,mean_kl,mean_ceiling,mean_posterior_risk,coverage,floor_sound,"
         "interval_valid,audit_i_um_theta,audit_i_residual,error";
}

std::string SweepRow::csv_row() const {
  std::ostringstream os;
  os << point << ',' << m << ',' << M << ',' << format_double(lambda) << ','
     << format_double(delta_margin) << ',' << format_double(epsilon) << ','
     << format_double(info_exact) << ',' << format_double(capacity) << ','
     << (capacity_measured ? 1 : 0) << ',' << format_double(i_us) << ','
     << format_double(floor_exact) << ',' << format_double(floor_capacity) << ','
     << format_double(floor) << ',' << format_double(bayes_risk) << ','
     << format_double(bayes_index_error) << ',' << replicates << ','
     << format_double(mean_emp_risk) << ',' << format_double(mean_kl) << ','
     << format_double(mean_ceiling) << ',' << format_double(mean_posterior_risk) << ','
     << format_double(coverage) << ',' << (floor_sound ? 1 : 0) << ','
     << (interval_valid ? 1 : 0) << ',';
  if (audit) {
    os << format_double(audit->i_um_theta) << ',' << format_double(audit->i_residual);
  } else {
    os << ',';
  }
  std::string err = error;  // keep the row parseable
  std::replace(err.begin(), err.end(), ',', ';');
  os << ',' << err;
  return os.str();
}

RunArtifacts run(const ExperimentConfig& cfg, const std::string& output_override) {
  std::string outdir = cfg.output;
  if (const char* env = std::getenv("CAPINT_OUTPUT_DIR")) {
    if (*env != '\0') outdir = env;
  }
  if (!output_override.empty()) outdir = output_override;
  std::filesystem::create_directories(outdir);

  RunArtifacts art;
  const std::vector<std::optional<double>> caps = [&] {
    std::vector<std::optional<double>> v;
    if (cfg.capacity_axis.empty()) {
      v.push_back(std::nullopt);
    } else {
      for (double c : cfg.capacity_axis) v.push_back(c);
    }
    return v;
  }();
  const std::vector<std::size_t> books =
      cfg.m_codebook_axis.empty() ? std::vector<std::size_t>{0} : cfg.m_codebook_axis;
  const std::vector<std::optional<double>> lambdas = [&] {
    std::vector<std::optional<double>> v;
    if (cfg.lambda_axis.empty()) {
      v.push_back(std::nullopt);
    } else {
      for (double l : cfg.lambda_axis) v.push_back(l);
    }
    return v;
  }();

  std::size_t point = 0;
  for (std::size_t m : cfg.m_axis) {
    for (const auto& cap : caps) {
      for (std::size_t mb : books) {
        for (const auto& lam : lambdas) {
          SweepRow row;
          try {
            row = evaluate_point(cfg, point, m, cap, mb, lam);
          } catch (const std::exception& e) {
            row.point = point;
            row.m = m;
            row.lambda = lam.value_or(cfg.learner.lambda);
            row.error = e.what();
          }
          art.rows.push_back(std::move(row));
          ++point;
        }
      }
    }
  }

  std::size_t ok = 0, gate_failures = 0, errored = 0;
  for (const SweepRow& r : art.rows) {
    if (!r.error.empty()) {
      ++errored;
    } else if (!r.floor_sound) {
      ++gate_failures;
    } else {
      ++ok;
    }
  }
  art.summary = {{"points", art.rows.size()},
                 {"ok", ok},
                 {"floor_gate_failures", gate_failures},
                 {"errors", errored}};

  const std::filesystem::path base(outdir);
  art.csv_path = (base / "sweep.csv").string();
  art.json_path = (base / "sweep.json").string();
  art.log_path = (base / "run.log").string();

  {
    std::ofstream csv(art.csv_path, std::ios::binary);
    csv << "# capint sweep v1\n" << SweepRow::csv_header() << '\n';
    for (const SweepRow& r : art.rows) csv << r.csv_row() << '\n';
  }
  {
    nlohmann::json rows = nlohmann::json::array();
    for (const SweepRow& r : art.rows) rows.push_back(r.to_json());
    const nlohmann::json doc{
        {"config", cfg.to_json()}, {"rows", rows}, {"summary", art.summary}};
    std::ofstream js(art.json_path, std::ios::binary);
    js << doc.dump(2) << '\n';
  }
  {
    std::ofstream log(art.log_path, std::ios::binary);
    for (const SweepRow& r : art.rows) {
      log << "point " << r.point;
      if (!r.error.empty()) {
        log << " ERROR " << r.error;
      } else {
        log << " m=" << r.m << " M=" << r.M << " floor=" << format_double(r.floor)
            << " bayes_risk=" << format_double(r.bayes_risk)
            << " mean_ceiling=" << format_double(r.mean_ceiling)
            << " coverage=" << format_double(r.coverage)
            << (r.floor_sound ? "" : " FLOOR-GATE-FAIL");
      }
      log << '\n';
    }
    log << "summary ok=" << ok << " floor_gate_failures=" << gate_failures
        << " errors=" << errored << '\n';
  }
  return art;
}

nlohmann::json VerifyReport::to_json() const {
  nlohmann::json cs = nlohmann::json::array();
  for (const VerifyCheck& c : checks) {
    cs.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  }
  return {{"checks", cs}, {"passed", passed}, {"failed", failed}, {"pass", pass}};
}

VerifyReport verify(const ExperimentConfig& cfg) {
  VerifyReport rep;
  const auto check = [&rep](const std::string& name, bool pass, const std::string& detail) {
    rep.checks.push_back({name, pass, detail});
  };

  try {
    const Instance inst = build_instance(cfg, 0);
    const codebook::Codebook& book = inst.mix.book;

    {
      const channel::DpiReport dpi = channel::verify_cascade_dpi(inst.cascade, inst.mix.us);
      double worst = 0.0;
      for (const auto& c : dpi.per_context) worst = std::min(worst, c.slack);
      check("data_processing", dpi.all_pass, "worst context slack " + format_double(worst));
    }

    {
      const prob::JointTable usy = inst.cascade.output_joint(inst.mix.us);
      const std::vector<std::string_view> lhs = {"u"}, rhs = {"y", "s"};
      const double joint_mi = prob::mutual_information_grouped(usy, lhs, rhs);
      const double chained = inst.i_us + inst.info_exact;
      const double gap = std::abs(joint_mi - chained);
      check("chain_rule", gap <= kGateTol,
            "|I(U;Y,S) - I(U;S) - I(U;Y|S)| = " + format_double(gap));
    }

    const learner::EnumeratedLearner lrn = cfg.learner.build(
        inst.cascade.y_size(), inst.cascade.contexts(), book.action_size(), {});
    const codebook::ObsLossTable obs =
        codebook::canonical_observable_loss(inst.mix, inst.cascade);

    {
      std::size_t m_audit = 0;
      const std::size_t cap_m = std::min<std::size_t>(
          3, *std::min_element(cfg.m_axis.begin(), cfg.m_axis.end()));
      const double per_sample = static_cast<double>(
          book.u_size() * inst.cascade.contexts() * inst.cascade.y_size());
      for (std::size_t m = cap_m; m >= 1; --m) {
        if (std::pow(per_sample, static_cast<double>(m)) * static_cast<double>(lrn.size()) <=
            kEnumBudget) {
          m_audit = m;
          break;
        }
      }
      if (m_audit == 0) {
        check("kl_decomposition", false, "enumeration infeasible for this instance");
        check("chain_decomposition", false, "enumeration infeasible for this instance");
        check("capacity_control", false, "enumeration infeasible for this instance");
      } else {
        try {
          const learner::InfoAudit audit =
              learner::enumerate_information(lrn, inst.mix, inst.cascade, m_audit);
          check("kl_decomposition", audit.identity_slack <= kGateTol,
                "m=" + std::to_string(m_audit) + " slack " +
                    format_double(audit.identity_slack));
          check("chain_decomposition", audit.chain_slack <= kGateTol,
                "slack " + format_double(audit.chain_slack));
          check("capacity_control", audit.capacity_slack >= -kGateTol,
                "I(U^m;theta) = " + format_double(audit.i_um_theta) + " vs budget " +
                    format_double(audit.capacity_budget));
        } catch (const std::exception& e) {
          check("kl_decomposition", false, e.what());
          check("chain_decomposition", false, e.what());
          check("capacity_control", false, e.what());
        }
      }
    }

    {
      const channel::Dataset ds = channel::sample_dataset(
          inst.mix.us, inst.cascade, cfg.m_axis.front(), rng::derive(cfg.seed, 0xC0DE));
      const auto data = observed_samples(ds);
      const prob::Dist post = lrn.posterior(data, obs);
      bool pass = true;
      std::string detail;
      try {
        const auto small =
            learner::compress_posterior(lrn, post, std::min<std::size_t>(2, lrn.size()), cfg.seed);
        const auto full = learner::compress_posterior(lrn, post, lrn.size(), cfg.seed);
        pass = small.kl_slack >= -kGateTol && full.kl_slack >= -kGateTol &&
               small.entropy_slack >= -kGateTol;
        detail = "K=2 kl slack " + format_double(small.kl_slack) + ", entropy slack " +
                 format_double(small.entropy_slack);
      } catch (const std::exception& e) {
        pass = false;
        detail = e.what();
      }
      check("compression", pass, detail);
    }

    const learner::OracleDecoder oracle = learner::bayes_optimal_decoder(inst.mix, inst.cascade);
    {
      const codebook::SoftLinkReport link =
          codebook::soft_link_slack(inst.mix, inst.cascade, oracle.table);
      const double margin = book.epsilon() + book.delta();
      const bool defs =
          std::abs(link.exact_floor - margin * link.p_mis) <= 1e-12 &&
          std::abs(link.additive_floor - (link.exact_floor - link.zeta)) <= 1e-12 &&
          std::abs(link.multiplicative_floor - link.exact_floor * (1.0 - link.zeta)) <= 1e-12;
      const bool holds = link.risk >= link.additive_floor - kGateTol &&
                         link.risk >= link.multiplicative_floor - kGateTol;
      check("loss_index_link", defs && holds,
            "risk " + format_double(link.risk) + " vs adjusted floors " +
                format_double(link.additive_floor) + " / " +
                format_double(link.multiplicative_floor));
    }

    {
      double worst = 0.0;
      worst = std::max(worst, codebook::tower_identity_gap(obs, inst.mix, inst.cascade,
                                                           oracle.table));
      const std::size_t probes = std::min<std::size_t>(5, lrn.size());
      for (std::size_t t = 0; t < probes; ++t) {
        worst = std::max(worst, codebook::tower_identity_gap(obs, inst.mix, inst.cascade,
                                                             lrn.hypothesis(t)));
      }
      check("tower_identity", worst <= kGateTol, "worst gap " + format_double(worst));
    }

    {
      const double reference = bounds::fano_floor(
          {book.M(), book.delta(), book.epsilon(), inst.info_exact, "exact"});
      bool identical = true;
      for (std::size_t m : cfg.m_axis) {
        (void)m;  // the floor has no m input; recompute and compare bitwise
        const double again = bounds::fano_floor(
            {book.M(), book.delta(), book.epsilon(), inst.info_exact, "exact"});
        identical = identical && std::memcmp(&again, &reference, sizeof(double)) == 0;
      }
      check("floor_m_independence", identical,
            "floor " + format_double(reference) + " across " +
                std::to_string(cfg.m_axis.size()) + " sample sizes");
    }

    {
      std::vector<double> grid = cfg.capacity_axis;
      if (grid.size() < 2) {
        const double c = inst.capacity.average;
        grid = {0.0, 0.5 * c, c, 2.0 * c + 0.1};
      }
      std::sort(grid.begin(), grid.end());
      bool monotone = true;
      double prev = std::numeric_limits<double>::infinity();
      for (double c : grid) {
        const double f =
            bounds::fano_floor({book.M(), book.delta(), book.epsilon(), c, "capacity-budget"});
        monotone = monotone && f <= prev + 1e-15;
        prev = f;
      }
      check("floor_capacity_monotone", monotone,
            std::to_string(grid.size()) + "-point capacity grid");
    }

    {
      std::vector<std::size_t> ms = cfg.m_axis;
      if (ms.size() < 2) ms.push_back(ms.front() * 10);
      std::sort(ms.begin(), ms.end());
      bool monotone = true;
      double prev = std::numeric_limits<double>::infinity();
      for (std::size_t m : ms) {
        bounds::CeilingInputs ci;
        ci.emp_risk = 0.25;
        ci.kl = 1.0;
        ci.m = m;
        ci.delta_conf = cfg.delta;
        const double c = bounds::pacbayes_ceiling(ci);
        monotone = monotone && c <= prev + 1e-15;
        prev = c;
      }
      check("ceiling_m_monotone", monotone, std::to_string(ms.size()) + "-point m grid");
    }

    {
      const bool cap_dominates = inst.capacity.average >= inst.info_exact - kGateTol;
      check("capacity_dominates_info", cap_dominates,
            "C = " + format_double(inst.capacity.average) + ", I(U;Y|S) = " +
                format_double(inst.info_exact));
      const double floor_exact = bounds::fano_floor(
          {book.M(), book.delta(), book.epsilon(), inst.info_exact, "exact"});
      const double floor_cap = bounds::fano_floor(
          {book.M(), book.delta(), book.epsilon(), inst.capacity.average, "capacity-budget"});
      const bool sound = floor_exact <= oracle.risk + kGateTol &&
                         floor_cap <= floor_exact + kGateTol;
      check("interval_soundness", sound,
            "floor " + format_double(floor_exact) + " <= bayes risk " +
                format_double(oracle.risk));
    }
  } catch (const std::exception& e) {
    check("instance_construction", false, e.what());
  }

  for (const VerifyCheck& c : rep.checks) {
    if (c.pass) {
      ++rep.passed;
    } else {
      ++rep.failed;
    }
  }
  rep.pass = rep.failed == 0;
  return rep;
}

}  // namespace capint::experiment
