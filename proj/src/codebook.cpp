#include "capint/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace capint::codebook {

namespace {

constexpr double kCertTol = 1e-12;
constexpr std::size_t kMaxFailuresStored = 32;

std::vector<std::vector<std::size_t>> permutations(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::vector<std::vector<std::size_t>> out;
  do {
    out.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

// Fraction of item pairs the two orders rank oppositely (normalized Kendall
// distance).
double pair_loss(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  const std::size_t n = a.size();
  std::vector<std::size_t> pos_a(n), pos_b(n);
  for (std::size_t i = 0; i < n; ++i) {
    pos_a[a[i]] = i;
    pos_b[b[i]] = i;
  }
  std::size_t discordant = 0;
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t y = x + 1; y < n; ++y) {
      const bool ax = pos_a[x] < pos_a[y];
      const bool bx = pos_b[x] < pos_b[y];
      if (ax != bx) ++discordant;
    }
  }
  return static_cast<double>(discordant) / (static_cast<double>(n * (n - 1)) / 2.0);
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

void record_failure(ConditionReport& cond, double slack, std::array<std::size_t, 3> where) {
  cond.worst_slack = std::min(cond.worst_slack, slack);
  if (slack < 0.0) {
    cond.pass = false;
    if (cond.failures.size() < kMaxFailuresStored) cond.failures.push_back(where);
  }
}

nlohmann::json condition_json(const ConditionReport& c) {
  nlohmann::json fails = nlohmann::json::array();
  for (const auto& f : c.failures) fails.push_back({f[0], f[1], f[2]});
  return {{"worst_slack", c.worst_slack}, {"pass", c.pass}, {"failures", fails}};
}

}  // namespace

DecoderTable::DecoderTable(std::size_t y_size, std::size_t s_size,
                           std::vector<std::size_t> action)
    : y_size_(y_size), s_size_(s_size), action_(std::move(action)) {
  if (y_size_ == 0 || s_size_ == 0 || action_.size() != y_size_ * s_size_) {
    throw validation_error("DecoderTable: need one action per (y,s) cell");
  }
}

void Codebook::check_shape() const {
  if (prototypes_.size() < 2) {
    throw validation_error("Codebook: M must be >= 2");
  }
  if (actions_.size() != prototypes_.size()) {
    throw validation_error("Codebook: prototypes/actions length mismatch");
  }
  if (!(delta_ > 0.0 && delta_ <= 1.0)) {
    throw validation_error("Codebook: delta must lie in (0,1]");
  }
  if (!(epsilon_ >= 0.0 && epsilon_ <= 1.0 - delta_)) {
    throw validation_error("Codebook: epsilon must lie in [0, 1-delta]");
  }
  if (loss_.size() != u_size_ * action_size_) {
    throw validation_error("Codebook: loss table shape mismatch");
  }
  for (double v : loss_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw validation_error("Codebook: loss values must lie in [0,1]");
    }
  }
  for (std::size_t p : prototypes_) {
    if (p >= u_size_) throw validation_error("Codebook: prototype index out of range");
  }
  for (std::size_t a : actions_) {
    if (a >= action_size_) throw validation_error("Codebook: action index out of range");
  }
  if (phi_table_.size() != action_size_) {
    throw validation_error("Codebook: phi must be total on the action alphabet");
  }
  for (std::size_t i : phi_table_) {
    if (i >= prototypes_.size()) throw validation_error("Codebook: phi value out of range");
  }
}

Codebook Codebook::build_classification(std::size_t M) {
  if (M < 2) throw validation_error("build_classification: M must be >= 2");
  Codebook b;
  b.kind_ = LossKind::ZeroOne;
  b.phi_kind_ = PhiKind::PredictedLabel;
  b.u_size_ = b.action_size_ = M;
  b.prototypes_.resize(M);
  std::iota(b.prototypes_.begin(), b.prototypes_.end(), 0);
  b.actions_ = b.prototypes_;
  b.epsilon_ = 0.0;
  b.delta_ = 1.0;
  b.loss_.assign(M * M, 1.0);
  for (std::size_t i = 0; i < M; ++i) b.loss_[i * M + i] = 0.0;
  b.phi_table_ = b.prototypes_;  // phi(a) = a: the predicted label is the index
  b.check_shape();
  return b;
}

Codebook Codebook::build_ranking(std::size_t n) {
  if (n < 2 || n > 6) {
    throw validation_error("build_ranking: n must lie in [2,6] (M = n! at desk scale)");
  }
  const auto perms = permutations(n);
  const std::size_t M = perms.size();
  Codebook b;
  b.kind_ = LossKind::PairwiseRanking;
  b.phi_kind_ = PhiKind::PredictedOrder;
  b.n_ = n;
  b.u_size_ = b.action_size_ = M;
  b.prototypes_.resize(M);
  std::iota(b.prototypes_.begin(), b.prototypes_.end(), 0);
  b.actions_ = b.prototypes_;
  b.epsilon_ = 0.0;
  b.delta_ = 1.0 / (static_cast<double>(n * (n - 1)) / 2.0);
  b.loss_.resize(M * M);
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < M; ++j) {
      b.loss_[i * M + j] = pair_loss(perms[i], perms[j]);
    }
  }
  b.phi_table_ = b.prototypes_;  // phi(a) = a: the predicted order is the index
  b.check_shape();
  return b;
}

Codebook Codebook::build_mse_packing(std::vector<std::vector<double>> points, double r,
                                     double tau) {
  if (points.empty()) throw validation_error("build_mse_packing: empty candidate grid");
  if (!(r > 0.0) || !(tau > 0.0)) {
    throw validation_error("build_mse_packing: r and tau must be positive");
  }
  const std::size_t dim = points[0].size();
  for (const auto& p : points) {
    if (p.size() != dim) throw validation_error("build_mse_packing: ragged point dimensions");
  }

  // Greedy packing in lexicographic coordinate order; deterministic.
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&points](std::size_t a, std::size_t b) {
    return points[a] < points[b];
  });
  std::vector<std::size_t> packed;
  for (std::size_t idx : order) {
    bool far_enough = true;
    for (std::size_t p : packed) {
      if (sq_dist(points[idx], points[p]) < r * r) {
        far_enough = false;
        break;
      }
    }
    if (far_enough) packed.push_back(idx);
  }
  if (packed.size() < 2) {
    throw validation_error(
        "build_mse_packing: fewer than 2 points are r-separated; choose a smaller r");
  }

  Codebook b;
  b.kind_ = LossKind::TruncatedMSE;
  b.phi_kind_ = PhiKind::NearestPrototypeVoronoi;
  b.r_ = r;
  b.tau_ = tau;
  b.u_size_ = b.action_size_ = points.size();
  b.prototypes_ = packed;
  b.actions_ = packed;  // a^(i) = u^(i): actions sit on the prototypes
  b.epsilon_ = 0.0;
  b.delta_ = std::min(r * r / (4.0 * tau * tau), 1.0);
  b.loss_.resize(points.size() * points.size());
  for (std::size_t u = 0; u < points.size(); ++u) {
    for (std::size_t a = 0; a < points.size(); ++a) {
      b.loss_[u * points.size() + a] =
          std::min(sq_dist(points[u], points[a]) / (tau * tau), 1.0);
    }
  }
  b.phi_table_.resize(points.size());
  for (std::size_t a = 0; a < points.size(); ++a) {
    std::size_t best = 0;
    double best_d = sq_dist(points[a], points[packed[0]]);
    for (std::size_t i = 1; i < packed.size(); ++i) {
      const double d = sq_dist(points[a], points[packed[i]]);
      if (d < best_d) {  // strict: exact ties stay at the lowest index
        best_d = d;
        best = i;
      }
    }
    b.phi_table_[a] = best;
  }
  b.points_ = std::move(points);
  b.check_shape();
  return b;
}

void Codebook::set_action(std::size_t i, std::size_t a) {
  if (i >= actions_.size() || a >= action_size_) {
    throw validation_error("Codebook::set_action: index out of range");
  }
  actions_[i] = a;
}

void Codebook::set_epsilon(double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0 - delta_)) {
    throw validation_error("Codebook::set_epsilon: epsilon must lie in [0, 1-delta]");
  }
  epsilon_ = epsilon;
}

void Codebook::set_delta(double delta) {
  if (!(delta > 0.0 && delta <= 1.0 - epsilon_)) {
    throw validation_error("Codebook::set_delta: delta must lie in (0, 1-epsilon]");
  }
  delta_ = delta;
}

nlohmann::json Codebook::to_json() const {
  nlohmann::json j;
  switch (kind_) {
    case LossKind::ZeroOne:
      j["loss_kind"] = "zero_one";
      break;
    case LossKind::PairwiseRanking:
      j["loss_kind"] = "pairwise_ranking";
      j["n"] = n_;
      break;
    case LossKind::TruncatedMSE:
      j["loss_kind"] = "truncated_mse";
      j["r"] = r_;
      j["tau"] = tau_;
      j["points"] = points_;
      break;
    case LossKind::Table: {
      j["loss_kind"] = "table";
      j["u_size"] = u_size_;
      j["action_size"] = action_size_;
      nlohmann::json rows = nlohmann::json::array();
      for (std::size_t u = 0; u < u_size_; ++u) {
        rows.push_back(std::vector<double>(loss_.begin() + u * action_size_,
                                           loss_.begin() + (u + 1) * action_size_));
      }
      j["loss"] = rows;
      break;
    }
  }
  j["M"] = M();
  j["prototypes"] = prototypes_;
  j["actions"] = actions_;
  j["epsilon"] = epsilon_;
  j["delta"] = delta_;
  switch (phi_kind_) {
    case PhiKind::PredictedLabel:
      j["phi"] = "builtin:predicted_label";
      break;
    case PhiKind::PredictedOrder:
      j["phi"] = "builtin:predicted_order";
      break;
    case PhiKind::NearestPrototypeVoronoi:
      j["phi"] = "builtin:nearest_prototype";
      break;
    case PhiKind::Table:
      j["phi"] = "table";
      j["phi_table"] = phi_table_;
      break;
  }
  return j;
}

Codebook Codebook::from_json(const nlohmann::json& j) {
  const std::string kind = j.at("loss_kind").get<std::string>();
  Codebook b;
  if (kind == "zero_one") {
    b = build_classification(j.at("M").get<std::size_t>());
  } else if (kind == "pairwise_ranking") {
    b = build_ranking(j.at("n").get<std::size_t>());
  } else if (kind == "truncated_mse") {
    b = build_mse_packing(j.at("points").get<std::vector<std::vector<double>>>(),
                          j.at("r").get<double>(), j.at("tau").get<double>());
  } else if (kind == "table") {
    b.kind_ = LossKind::Table;
    b.u_size_ = j.at("u_size").get<std::size_t>();
    b.action_size_ = j.at("action_size").get<std::size_t>();
    b.loss_.reserve(b.u_size_ * b.action_size_);
    for (const auto& row : j.at("loss")) {
      for (const auto& v : row) b.loss_.push_back(v.get<double>());
    }
  } else {
    throw validation_error("Codebook::from_json: unknown loss_kind '" + kind + "'");
  }

  // Loaded books may override what the constructors chose (including
  // nonzero epsilon); they are validated, never re-derived.
  b.delta_ = j.at("delta").get<double>();
  b.epsilon_ = j.at("epsilon").get<double>();
  b.prototypes_ = j.at("prototypes").get<std::vector<std::size_t>>();
  b.actions_ = j.at("actions").get<std::vector<std::size_t>>();

  const std::string phi = j.at("phi").get<std::string>();
  if (phi == "builtin:predicted_label") {
    b.phi_kind_ = PhiKind::PredictedLabel;
  } else if (phi == "builtin:predicted_order") {
    b.phi_kind_ = PhiKind::PredictedOrder;
  } else if (phi == "builtin:nearest_prototype") {
    b.phi_kind_ = PhiKind::NearestPrototypeVoronoi;
  } else if (phi == "table") {
    b.phi_kind_ = PhiKind::Table;
    b.phi_table_ = j.at("phi_table").get<std::vector<std::size_t>>();
  } else {
    throw validation_error("Codebook::from_json: unknown phi '" + phi + "'");
  }
  if (b.phi_kind_ == PhiKind::PredictedLabel || b.phi_kind_ == PhiKind::PredictedOrder) {
    b.phi_table_.resize(b.action_size_);
    std::iota(b.phi_table_.begin(), b.phi_table_.end(), 0);
  } else if (b.phi_kind_ == PhiKind::NearestPrototypeVoronoi) {
    if (b.points_.empty()) {
      throw validation_error("Codebook::from_json: nearest-prototype phi needs points");
    }
    b.phi_table_.resize(b.points_.size());
    for (std::size_t a = 0; a < b.points_.size(); ++a) {
      std::size_t best = 0;
      double best_d = sq_dist(b.points_[a], b.points_[b.prototypes_[0]]);
      for (std::size_t i = 1; i < b.prototypes_.size(); ++i) {
        const double d = sq_dist(b.points_[a], b.points_[b.prototypes_[i]]);
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      b.phi_table_[a] = best;
    }
  }
  b.check_shape();
  return b;
}

ValidationReport validate(const Codebook& book, std::size_t contexts) {
  if (contexts == 0) throw validation_error("validate: need at least one context");
  ValidationReport report;
  report.diagonal.worst_slack = std::numeric_limits<double>::infinity();
  report.margin.worst_slack = std::numeric_limits<double>::infinity();
  report.link.worst_slack = std::numeric_limits<double>::infinity();
  const std::size_t M = book.M();
  const double eps = book.epsilon();
  const double margin = book.epsilon() + book.delta();

  for (std::size_t i = 0; i < M; ++i) {
    const double diag = book.loss(book.prototype(i), book.action(i));
    record_failure(report.diagonal, eps - diag, {i, i, 0});
    for (std::size_t jj = 0; jj < M; ++jj) {
      if (jj == i) continue;
      const double off = book.loss(book.prototype(jj), book.action(i));
      record_failure(report.margin, off - margin, {jj, i, 0});
    }
  }

  for (std::size_t a = 0; a < book.action_size(); ++a) {
    for (std::size_t s = 0; s < contexts; ++s) {
      const std::size_t decoded = book.phi(a, s);
      for (std::size_t i = 0; i < M; ++i) {
        if (i == decoded) continue;
        record_failure(report.link, book.loss(book.prototype(i), a) - margin, {a, s, i});
      }
    }
  }

  report.pass = report.diagonal.pass && report.margin.pass && report.link.pass;
  return report;
}

nlohmann::json ValidationReport::to_json() const {
  return {{"diagonal", condition_json(diagonal)},
          {"margin", condition_json(margin)},
          {"link", condition_json(link)},
          {"pass", pass}};
}

MixtureInstance mixture(const Codebook& book, const Dist& context_law) {
  const std::size_t M = book.M();
  const std::size_t nu = book.u_size();
  const std::size_t ns = context_law.size();
  std::vector<double> m(M * nu * ns, 0.0);
  for (std::size_t jj = 0; jj < M; ++jj) {
    const std::size_t u = book.prototype(jj);
    for (std::size_t s = 0; s < ns; ++s) {
      m[(jj * nu + u) * ns + s] = context_law[s] / static_cast<double>(M);
    }
  }
  JointTable jus({{"j", M}, {"u", nu}, {"s", ns}}, std::move(m));
  JointTable us = jus.marginal({"u", "s"});

  const JointTable js = jus.marginal({"j", "s"});
  const double h_js =
      prob::entropy(Dist(std::vector<double>(js.masses().begin(), js.masses().end())));
  const double h_s = prob::entropy(jus.marginal_dist("s"));
  const double h_j_given_s = h_js - h_s;
  const double i_js = prob::mutual_information(jus, "j", "s");
  if (std::abs(h_j_given_s - std::log(static_cast<double>(M))) > kCertTol) {
    throw domain_error("mixture: H(J|S) != log M; index law is not uniform");
  }
  if (i_js > kCertTol) {
    throw domain_error("mixture: I(J;S) != 0; index leaks context");
  }
  return {book, context_law, std::move(jus), std::move(us), h_j_given_s, i_js};
}

ObsLossTable::ObsLossTable(std::size_t y_size, std::size_t s_size, std::size_t action_size,
                           std::vector<double> values, std::vector<char> defined)
    : y_size_(y_size), s_size_(s_size), action_size_(action_size),
      values_(std::move(values)), defined_(std::move(defined)) {
  if (values_.size() != y_size_ * s_size_ * action_size_ ||
      defined_.size() != y_size_ * s_size_) {
    throw validation_error("ObsLossTable: shape mismatch");
  }
}

double ObsLossTable::value(std::size_t y, std::size_t s, std::size_t a) const {
  if (!defined(y, s)) {
    throw domain_error("ObsLossTable: cell (y=" + std::to_string(y) + ", s=" +
                       std::to_string(s) + ") has zero probability; loss undefined");
  }
  return values_.at((y * s_size_ + s) * action_size_ + a);
}

ObsLossTable canonical_observable_loss(const MixtureInstance& mix,
                                       const CascadeChannel& cascade) {
  const JointTable usy = cascade.output_joint(mix.us);
  const std::size_t nu = usy.axes()[0].size, ns = usy.axes()[1].size, ny = usy.axes()[2].size;
  const std::size_t na = mix.book.action_size();
  std::span<const double> p = usy.masses();  // row-major (u,s,y)

  std::vector<double> values(ny * ns * na, 0.0);
  std::vector<char> defined(ny * ns, 0);
  for (std::size_t y = 0; y < ny; ++y) {
    for (std::size_t s = 0; s < ns; ++s) {
      double pys = 0.0;
      for (std::size_t u = 0; u < nu; ++u) pys += p[(u * ns + s) * ny + y];
      if (pys == 0.0) continue;
      defined[y * ns + s] = 1;
      for (std::size_t a = 0; a < na; ++a) {
        double acc = 0.0;
        for (std::size_t u = 0; u < nu; ++u) {
          const double puv = p[(u * ns + s) * ny + y];
          if (puv > 0.0) acc += puv * mix.book.loss(u, a);
        }
        values[(y * ns + s) * na + a] = acc / pys;
      }
    }
  }
  return ObsLossTable(ny, ns, na, std::move(values), std::move(defined));
}

namespace {

// Walks the exact law of (J, S, H, Y) under mixture x cascade and hands each
// atom to the visitor as (mass, j, s, y).
template <typename Visitor>
void enumerate_jsy(const MixtureInstance& mix, const CascadeChannel& cascade, Visitor&& visit) {
  const std::size_t M = mix.book.M();
  const std::size_t ns = mix.context_law.size();
  if (cascade.u_size() != mix.book.u_size() || cascade.contexts() != ns) {
    throw validation_error("mixture/cascade alphabet mismatch");
  }
  for (std::size_t jj = 0; jj < M; ++jj) {
    const std::size_t u = mix.book.prototype(jj);
    for (std::size_t s = 0; s < ns; ++s) {
      const double pjs = mix.context_law[s] / static_cast<double>(M);
      if (pjs == 0.0) continue;
      for (std::size_t h = 0; h < cascade.h_size(); ++h) {
        const double ph = cascade.cog(s)(u, h);
        if (ph == 0.0) continue;
        for (std::size_t y = 0; y < cascade.y_size(); ++y) {
          const double mass = pjs * ph * cascade.art(s)(h, y);
          if (mass > 0.0) visit(mass, jj, s, y);
        }
      }
    }
  }
}

void check_decoder(const MixtureInstance& mix, const CascadeChannel& cascade,
                   const DecoderTable& pi) {
  if (pi.y_size() != cascade.y_size() || pi.s_size() != cascade.contexts()) {
    throw validation_error("decoder shape mismatch with cascade");
  }
  for (std::size_t y = 0; y < pi.y_size(); ++y) {
    for (std::size_t s = 0; s < pi.s_size(); ++s) {
      if (pi(y, s) >= mix.book.action_size()) {
        throw validation_error("decoder emits an action outside the codebook alphabet");
      }
    }
  }
}

}  // namespace

JointTable index_output_joint(const MixtureInstance& mix, const CascadeChannel& cascade) {
  const std::size_t M = mix.book.M();
  const std::size_t ns = mix.context_law.size();
  const std::size_t ny = cascade.y_size();
  std::vector<double> m(M * ns * ny, 0.0);
  enumerate_jsy(mix, cascade, [&](double mass, std::size_t jj, std::size_t s, std::size_t y) {
    m[(jj * ns + s) * ny + y] += mass;
  });
  return JointTable({{"j", M}, {"s", ns}, {"y", ny}}, std::move(m));
}

double decoder_risk(const MixtureInstance& mix, const CascadeChannel& cascade,
                    const DecoderTable& pi) {
  check_decoder(mix, cascade, pi);
  double risk = 0.0;
  enumerate_jsy(mix, cascade, [&](double mass, std::size_t jj, std::size_t s, std::size_t y) {
    risk += mass * mix.book.loss(mix.book.prototype(jj), pi(y, s));
  });
  return risk;
}

double misindex_probability(const MixtureInstance& mix, const CascadeChannel& cascade,
                            const DecoderTable& pi) {
  check_decoder(mix, cascade, pi);
  double p = 0.0;
  enumerate_jsy(mix, cascade, [&](double mass, std::size_t jj, std::size_t s, std::size_t y) {
    if (mix.book.phi(pi(y, s), s) != jj) p += mass;
  });
  return p;
}

double tower_identity_gap(const ObsLossTable& obs, const MixtureInstance& mix,
                          const CascadeChannel& cascade, const DecoderTable& pi) {
  check_decoder(mix, cascade, pi);
  // E[l*(Y,S,pi(Y,S))] over the observed law, undefined cells carry no mass.
  std::vector<double> pys(obs.y_size() * obs.s_size(), 0.0);
  enumerate_jsy(mix, cascade, [&](double mass, std::size_t, std::size_t s, std::size_t y) {
    pys[y * obs.s_size() + s] += mass;
  });
  double lhs = 0.0;
  for (std::size_t y = 0; y < obs.y_size(); ++y) {
    for (std::size_t s = 0; s < obs.s_size(); ++s) {
      const double w = pys[y * obs.s_size() + s];
      if (w > 0.0) lhs += w * obs.value(y, s, pi(y, s));
    }
  }
  return std::abs(lhs - decoder_risk(mix, cascade, pi));
}

SoftLinkReport soft_link_slack(const MixtureInstance& mix, const CascadeChannel& cascade,
                               const DecoderTable& pi) {
  check_decoder(mix, cascade, pi);
  const double margin = mix.book.epsilon() + mix.book.delta();
  SoftLinkReport r;
  double p_e_and_gc = 0.0;
  enumerate_jsy(mix, cascade, [&](double mass, std::size_t jj, std::size_t s, std::size_t y) {
    const std::size_t a = pi(y, s);
    r.risk += mass * mix.book.loss(mix.book.prototype(jj), a);
    if (mix.book.phi(a, s) != jj) {
      r.p_mis += mass;
      if (mix.book.loss(mix.book.prototype(jj), a) < margin) p_e_and_gc += mass;
    }
  });
  if (r.p_mis > 0.0) {
    r.zeta = p_e_and_gc / r.p_mis;
  } else {
    r.zeta = 0.0;
    r.conditioning_empty = true;
  }
  r.exact_floor = margin * r.p_mis;
  r.additive_floor = r.exact_floor - r.zeta;
  r.multiplicative_floor = r.exact_floor * (1.0 - r.zeta);
  return r;
}

}  // namespace capint::codebook
