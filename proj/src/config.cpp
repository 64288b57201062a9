#include "capint/config.hpp"

#include <fstream>

namespace capint::experiment {

namespace {

std::string joined(const std::string& path, const char* key) {
  return path.empty() ? std::string(key) : path + "." + key;
}

const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) {
    throw validation_error("config: missing field " + joined(path, key));
  }
  return j.at(key);
}

template <typename T>
T get_as(const nlohmann::json& j, const char* key, const std::string& path) {
  try {
    return require(j, key, path).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw validation_error("config: field " + joined(path, key) + " has the wrong type");
  }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, const std::string& path, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get_as<T>(j, key, path);
}

KernelSpec parse_kernel(const nlohmann::json& j, const std::string& path) {
  KernelSpec k;
  k.kind = get_as<std::string>(j, "kind", path);
  if (k.kind == "symmetric") {
    k.flip = get_as<double>(j, "flip", path);
  } else if (k.kind == "uniform") {
    k.out = get_or<std::size_t>(j, "out", path, 0);
  } else if (k.kind == "constant") {
    k.out = get_or<std::size_t>(j, "out", path, 0);
    k.target = get_as<std::size_t>(j, "target", path);
  } else if (k.kind == "matrix") {
    k.rows = get_as<std::vector<std::vector<double>>>(j, "rows", path);
    if (k.rows.empty()) throw validation_error("config: empty matrix kernel at " + path);
    for (const auto& row : k.rows) {
      if (row.size() != k.rows[0].size()) {
        throw validation_error("config: ragged matrix kernel at " + path);
      }
    }
  } else if (k.kind != "identity") {
    throw validation_error("config: unknown kernel kind at " + path);
  }
  return k;
}

nlohmann::json kernel_json(const KernelSpec& k) {
  nlohmann::json j{{"kind", k.kind}};
  if (k.kind == "symmetric") j["flip"] = k.flip;
  if (k.kind == "uniform" && k.out != 0) j["out"] = k.out;
  if (k.kind == "constant") {
    j["target"] = k.target;
    if (k.out != 0) j["out"] = k.out;
  }
  if (k.kind == "matrix") j["rows"] = k.rows;
  return j;
}

std::vector<KernelSpec> parse_kernels(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) {
    throw validation_error("config: " + path + " must be a nonempty array");
  }
  std::vector<KernelSpec> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(parse_kernel(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

FamilySpec parse_family(const nlohmann::json& j, const std::string& path) {
  FamilySpec f;
  f.kind = get_as<std::string>(j, "kind", path);
  if (f.kind == "cardinality_bounded") {
    f.k = get_as<std::size_t>(j, "k", path);
  } else if (f.kind == "enumerated") {
    f.kernels = parse_kernels(require(j, "kernels", path), path + ".kernels");
  } else if (f.kind == "noisy_parametric") {
    f.params = get_as<std::vector<double>>(j, "params", path);
    f.kernels = parse_kernels(require(j, "kernels", path), path + ".kernels");
  } else {
    throw validation_error("config: unknown family kind at " + path);
  }
  return f;
}

nlohmann::json family_json(const FamilySpec& f) {
  nlohmann::json j{{"kind", f.kind}};
  if (f.kind == "cardinality_bounded") j["k"] = f.k;
  if (!f.kernels.empty()) {
    nlohmann::json ks = nlohmann::json::array();
    for (const KernelSpec& k : f.kernels) ks.push_back(kernel_json(k));
    j["kernels"] = ks;
  }
  if (f.kind == "noisy_parametric") j["params"] = f.params;
  return j;
}

}  // namespace

codebook::Codebook CodebookSpec::build(std::size_t m_override) const {
  if (kind == "classification") {
    return codebook::Codebook::build_classification(m_override != 0 ? m_override : M);
  }
  if (m_override != 0) {
    throw validation_error("config: the M axis only applies to classification codebooks");
  }
  if (kind == "ranking") return codebook::Codebook::build_ranking(n);
  if (kind == "mse_packing") return codebook::Codebook::build_mse_packing(points, r, tau);
  throw validation_error("config: unknown codebook kind '" + kind + "'");
}

prob::Kernel KernelSpec::build(std::size_t in) const {
  if (kind == "identity") return prob::Kernel::identity(in);
  if (kind == "symmetric") return prob::Kernel::symmetric(in, flip);
  if (kind == "uniform") return prob::Kernel::uniform(in, out != 0 ? out : in);
  if (kind == "constant") return prob::Kernel::constant(in, out != 0 ? out : in, target);
  if (kind == "matrix") {
    if (rows.size() != in) {
      throw validation_error("config: matrix kernel has " + std::to_string(rows.size()) +
                             " rows, needs " + std::to_string(in));
    }
    const std::size_t cols = rows.empty() ? 0 : rows[0].size();
    std::vector<double> flat;
    flat.reserve(in * cols);
    for (const auto& row : rows) {
      if (row.size() != cols) throw validation_error("config: ragged matrix kernel");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    return prob::Kernel(in, cols, std::move(flat));
  }
  throw validation_error("config: unknown kernel kind '" + kind + "'");
}

channel::CascadeChannel CascadeSpec::build(std::size_t u_size) const {
  std::vector<prob::Kernel> cog_k, art_k;
  cog_k.reserve(cog.size());
  for (const KernelSpec& k : cog) cog_k.push_back(k.build(u_size));
  const std::size_t h_size = cog_k.empty() ? 0 : cog_k[0].out_size();
  art_k.reserve(art.size());
  for (const KernelSpec& k : art) art_k.push_back(k.build(h_size));
  return channel::CascadeChannel(std::move(cog_k), std::move(art_k));
}

channel::ChannelFamily FamilySpec::build(std::size_t in) const {
  if (kind == "cardinality_bounded") return channel::CardinalityBounded{k};
  if (kind == "enumerated") {
    std::vector<prob::Kernel> ks;
    for (const KernelSpec& spec : kernels) ks.push_back(spec.build(in));
    return channel::EnumeratedSet{std::move(ks)};
  }
  if (kind == "noisy_parametric") {
    std::vector<prob::Kernel> ks;
    for (const KernelSpec& spec : kernels) ks.push_back(spec.build(in));
    return channel::NoisyParametric{params, std::move(ks)};
  }
  throw validation_error("config: unknown family kind '" + kind + "'");
}

learner::EnumeratedLearner LearnerSpec::build(std::size_t y_size, std::size_t s_size,
                                              std::size_t action_size,
                                              std::optional<double> lambda_override) const {
  std::vector<codebook::DecoderTable> hyps;
  if (hypotheses == "all_decoders") {
    hyps = learner::all_decoders(y_size, s_size, action_size);
  } else if (hypotheses == "explicit") {
    if (tables.empty()) throw validation_error("config: learner.tables is empty");
    for (const auto& t : tables) {
      if (t.size() != y_size * s_size) {
        throw validation_error("config: learner table size does not match the (y,s) grid");
      }
      hyps.emplace_back(y_size, s_size, t);
    }
  } else {
    throw validation_error("config: learner.hypotheses must be 'all_decoders' or 'explicit'");
  }
  prob::Dist prior = prior_masses.empty() ? prob::Dist::uniform(hyps.size())
                                          : prob::Dist(prior_masses);
  learner::PosteriorRule r;
  if (rule == "gibbs") {
    r = learner::PosteriorRule::Gibbs;
  } else if (rule == "map_smoothed") {
    r = learner::PosteriorRule::MapSmoothed;
  } else {
    throw validation_error("config: learner.rule must be 'gibbs' or 'map_smoothed'");
  }
  return learner::EnumeratedLearner(std::move(hyps), std::move(prior), r,
                                    lambda_override.value_or(lambda), gamma);
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;

  const nlohmann::json& inst = require(j, "instance", "");
  const nlohmann::json& cb = require(inst, "codebook", "instance");
  cfg.codebook.kind = get_as<std::string>(cb, "kind", "instance.codebook");
  cfg.codebook.M = get_or<std::size_t>(cb, "M", "instance.codebook", 2);
  cfg.codebook.n = get_or<std::size_t>(cb, "n", "instance.codebook", 3);
  if (cb.contains("points")) {
    cfg.codebook.points =
        get_as<std::vector<std::vector<double>>>(cb, "points", "instance.codebook");
    cfg.codebook.r = get_as<double>(cb, "r", "instance.codebook");
    cfg.codebook.tau = get_as<double>(cb, "tau", "instance.codebook");
  }

  const nlohmann::json& law = require(inst, "context_law", "instance");
  if (law.is_string() && law.get<std::string>() == "uniform") {
    const auto contexts = get_as<std::size_t>(inst, "contexts", "instance");
    if (contexts == 0) throw validation_error("config: instance.contexts must be >= 1");
    const prob::Dist u = prob::Dist::uniform(contexts);
    cfg.context_law.assign(u.masses().begin(), u.masses().end());
  } else {
    try {
      cfg.context_law = law.get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
      throw validation_error("config: instance.context_law must be 'uniform' or a mass array");
    }
  }

  const nlohmann::json& casc = require(inst, "cascade", "instance");
  cfg.cascade.cog = parse_kernels(require(casc, "cog", "instance.cascade"),
                                  "instance.cascade.cog");
  cfg.cascade.art = parse_kernels(require(casc, "art", "instance.cascade"),
                                  "instance.cascade.art");
  if (cfg.cascade.cog.size() != cfg.context_law.size() ||
      cfg.cascade.art.size() != cfg.context_law.size()) {
    throw validation_error("config: cascade kernel lists must have one entry per context");
  }

  if (inst.contains("families")) {
    const nlohmann::json& fams = inst.at("families");
    FamiliesSpec fs;
    const nlohmann::json& fc = require(fams, "cog", "instance.families");
    const nlohmann::json& fa = require(fams, "art", "instance.families");
    for (std::size_t i = 0; i < fc.size(); ++i) {
      fs.cog.push_back(parse_family(fc[i], "instance.families.cog[" + std::to_string(i) + "]"));
    }
    for (std::size_t i = 0; i < fa.size(); ++i) {
      fs.art.push_back(parse_family(fa[i], "instance.families.art[" + std::to_string(i) + "]"));
    }
    if (fs.cog.size() != cfg.context_law.size() || fs.art.size() != cfg.context_law.size()) {
      throw validation_error("config: family lists must have one entry per context");
    }
    cfg.families = std::move(fs);
  }

  if (j.contains("learner")) {
    const nlohmann::json& lrn = j.at("learner");
    cfg.learner.hypotheses = get_or<std::string>(lrn, "hypotheses", "learner", "all_decoders");
    if (lrn.contains("tables")) {
      cfg.learner.tables =
          get_as<std::vector<std::vector<std::size_t>>>(lrn, "tables", "learner");
    }
    if (lrn.contains("prior")) {
      cfg.learner.prior_masses = get_as<std::vector<double>>(lrn, "prior", "learner");
    }
    cfg.learner.rule = get_or<std::string>(lrn, "rule", "learner", "gibbs");
    cfg.learner.lambda = get_or<double>(lrn, "lambda", "learner", 1.0);
    cfg.learner.gamma = get_or<double>(lrn, "gamma", "learner", 0.0);
  }

  if (j.contains("sweep")) {
    const nlohmann::json& sw = j.at("sweep");
    if (sw.contains("m")) cfg.m_axis = get_as<std::vector<std::size_t>>(sw, "m", "sweep");
    if (sw.contains("capacity")) {
      cfg.capacity_axis = get_as<std::vector<double>>(sw, "capacity", "sweep");
      if (cfg.capacity_axis.empty()) {
        throw validation_error("config: sweep.capacity must be nonempty when present");
      }
    }
    if (sw.contains("M")) {
      cfg.m_codebook_axis = get_as<std::vector<std::size_t>>(sw, "M", "sweep");
      if (cfg.m_codebook_axis.empty()) {
        throw validation_error("config: sweep.M must be nonempty when present");
      }
    }
    if (sw.contains("lambda")) {
      cfg.lambda_axis = get_as<std::vector<double>>(sw, "lambda", "sweep");
      if (cfg.lambda_axis.empty()) {
        throw validation_error("config: sweep.lambda must be nonempty when present");
      }
    }
  }
  if (cfg.m_axis.empty()) throw validation_error("config: sweep.m must be nonempty");
  for (std::size_t m : cfg.m_axis) {
    if (m == 0) throw validation_error("config: sweep.m entries must be >= 1");
  }

  cfg.replicates = get_or<std::size_t>(j, "replicates", "", 1);
  if (cfg.replicates == 0) throw validation_error("config: replicates must be >= 1");
  cfg.delta = get_or<double>(j, "delta", "", 0.05);
  if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) {
    throw validation_error("config: delta must lie in (0,1)");
  }
  if (j.contains("eta")) {
    const double eta = get_as<double>(j, "eta", "");
    if (!(eta > 0.0 && eta < 1.0)) throw validation_error("config: eta must lie in (0,1)");
    cfg.eta = eta;
  }
  cfg.seed = get_or<std::uint64_t>(j, "seed", "", 0);
  cfg.output = get_or<std::string>(j, "output", "", "out");

  // Fail fast on inconsistent instance pieces.
  const codebook::Codebook probe = cfg.codebook.build();
  if (!cfg.m_codebook_axis.empty() && cfg.codebook.kind != "classification") {
    throw validation_error("config: the M axis only applies to classification codebooks");
  }
  (void)probe;
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw validation_error("config: " + path + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json cb{{"kind", codebook.kind}};
  if (codebook.kind == "classification") cb["M"] = codebook.M;
  if (codebook.kind == "ranking") cb["n"] = codebook.n;
  if (codebook.kind == "mse_packing") {
    cb["points"] = codebook.points;
    cb["r"] = codebook.r;
    cb["tau"] = codebook.tau;
  }

  nlohmann::json cog = nlohmann::json::array(), art = nlohmann::json::array();
  for (const KernelSpec& k : cascade.cog) cog.push_back(kernel_json(k));
  for (const KernelSpec& k : cascade.art) art.push_back(kernel_json(k));

  nlohmann::json inst{{"codebook", cb},
                      {"context_law", context_law},
                      {"cascade", {{"cog", cog}, {"art", art}}}};
  if (families) {
    nlohmann::json fc = nlohmann::json::array(), fa = nlohmann::json::array();
    for (const FamilySpec& f : families->cog) fc.push_back(family_json(f));
    for (const FamilySpec& f : families->art) fa.push_back(family_json(f));
    inst["families"] = {{"cog", fc}, {"art", fa}};
  }

  nlohmann::json lrn{{"hypotheses", learner.hypotheses},
                     {"rule", learner.rule},
                     {"lambda", learner.lambda},
                     {"gamma", learner.gamma}};
  if (!learner.tables.empty()) lrn["tables"] = learner.tables;
  if (!learner.prior_masses.empty()) lrn["prior"] = learner.prior_masses;

  nlohmann::json sweep{{"m", m_axis}};
  if (!capacity_axis.empty()) sweep["capacity"] = capacity_axis;
  if (!m_codebook_axis.empty()) sweep["M"] = m_codebook_axis;
  if (!lambda_axis.empty()) sweep["lambda"] = lambda_axis;

  nlohmann::json out{{"instance", inst},     {"learner", lrn},   {"sweep", sweep},
                     {"replicates", replicates}, {"delta", delta},   {"seed", seed},
                     {"output", output}};
  if (eta) out["eta"] = *eta;
  return out;
}

}  // namespace capint::experiment
