#include "capint/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "capint/numfmt.hpp"

namespace capint::bounds {

namespace {

constexpr double kLn2 = 0.6931471805599453;

void check_floor_inputs(const FloorInputs& f) {
  if (f.M < 2) throw validation_error("fano_floor: M must be >= 2");
  if (!(f.delta > 0.0 && f.delta <= 1.0)) {
    throw validation_error("fano_floor: delta must lie in (0,1]");
  }
  if (!(f.epsilon >= 0.0 && f.epsilon + f.delta <= 1.0 + 1e-12)) {
    throw validation_error("fano_floor: need epsilon >= 0 and epsilon + delta <= 1");
  }
  if (!(f.info >= -kLn2 - 1e-12)) {
    throw validation_error("fano_floor: info below -ln 2 is outside the formula's range");
  }
}

}  // namespace

double fano_floor(const FloorInputs& f) {
  check_floor_inputs(f);
  const double log_m = std::log(static_cast<double>(f.M));
  const double bracket = 1.0 - (f.info + kLn2) / log_m;
  return (f.epsilon + f.delta) * std::max(0.0, bracket);
}

WallResult information_wall(double capacity, const std::vector<WallBook>& books) {
  if (books.empty()) throw validation_error("information_wall: empty codebook list");
  if (!(capacity >= 0.0)) throw validation_error("information_wall: capacity must be >= 0");
  WallResult r;
  r.per_book.reserve(books.size());
  for (std::size_t i = 0; i < books.size(); ++i) {
    const double floor = fano_floor({books[i].M, books[i].delta, books[i].epsilon, capacity});
    r.per_book.push_back(floor);
    const bool better = floor > r.value;
    const bool tie_smaller_m = floor == r.value && books[i].M < books[r.argmax].M;
    if (i == 0 || better || tie_smaller_m) {
      r.value = floor;
      r.argmax = i;
    }
  }
  return r;
}

namespace {

void check_ceiling_inputs(const CeilingInputs& c) {
  if (c.m == 0) throw validation_error("pacbayes_ceiling: m must be >= 1");
  if (!(c.emp_risk >= 0.0 && c.emp_risk <= 1.0)) {
    throw validation_error("pacbayes_ceiling: empirical risk must lie in [0,1]");
  }
  if (!(c.kl >= 0.0)) throw validation_error("pacbayes_ceiling: KL must be >= 0");
  if (!(c.delta_conf > 0.0 && c.delta_conf < 1.0)) {
    throw validation_error("pacbayes_ceiling: delta must lie in (0,1)");
  }
  if (c.eta) {
    if (!(*c.eta > 0.0 && *c.eta < 1.0)) {
      throw validation_error("pacbayes_ceiling: eta must lie in (0,1)");
    }
    if (!(c.delta_conf + *c.eta < 1.0)) {
      throw validation_error("pacbayes_ceiling: delta + eta must stay below 1");
    }
  }
  if (!(c.cbar >= 0.0 && c.ius >= 0.0 && c.rho >= 0.0 && c.kl_prior >= 0.0)) {
    throw validation_error("pacbayes_ceiling: budget terms must be >= 0");
  }
}

}  // namespace

double pacbayes_ceiling(const CeilingInputs& c) {
  check_ceiling_inputs(c);
  return c.emp_risk +
         std::sqrt((c.kl + std::log(1.0 / c.delta_conf)) / (2.0 * static_cast<double>(c.m)));
}

double kl_budget(std::size_t m, double cbar, double ius, double rho, double kl_prior) {
  if (!(cbar >= 0.0 && ius >= 0.0 && rho >= 0.0 && kl_prior >= 0.0)) {
    throw validation_error("kl_budget: all terms must be >= 0");
  }
  return static_cast<double>(m) * cbar + static_cast<double>(m) * ius + rho + kl_prior;
}

double markov_lift(double expected_kl, double eta) {
  if (!(eta > 0.0 && eta < 1.0)) throw validation_error("markov_lift: eta must lie in (0,1)");
  if (!(expected_kl >= 0.0)) throw validation_error("markov_lift: expected KL must be >= 0");
  return expected_kl / eta;
}

CapacityCeiling capacity_highprob_ceiling(const CeilingInputs& c) {
  check_ceiling_inputs(c);
  if (!c.eta) {
    throw validation_error("capacity_highprob_ceiling: eta is required for the Markov lift");
  }
  CapacityCeiling out;
  out.expected_budget = kl_budget(c.m, c.cbar, c.ius, c.rho, c.kl_prior);
  out.lifted_kl = markov_lift(out.expected_budget, *c.eta);
  CeilingInputs lifted = c;
  lifted.kl = out.lifted_kl;
  out.ceiling = pacbayes_ceiling(lifted);
  out.failure_prob = c.delta_conf + *c.eta;
  return out;
}

RequiredCapacity required_capacity(double r, std::size_t M, double delta, double epsilon) {
  if (M < 2) throw validation_error("required_capacity: M must be >= 2");
  const double margin = epsilon + delta;
  if (!(margin > 0.0)) throw validation_error("required_capacity: epsilon + delta must be > 0");
  if (!(r >= 0.0)) throw validation_error("required_capacity: target risk must be >= 0");
  RequiredCapacity out;
  out.nats = (1.0 - r / margin) * std::log(static_cast<double>(M)) - kLn2;
  out.vacuous = out.nats < 0.0;
  return out;
}

double risk_transfer(double alpha, double beta, double obs_bound, bool canonical_loss) {
  if (!(alpha >= 0.0 && beta >= 0.0)) {
    throw validation_error("risk_transfer: alpha and beta must be >= 0");
  }
  if (canonical_loss && (alpha != 1.0 || beta != 0.0)) {
    throw validation_error(
        "risk_transfer: the canonical observable loss transfers with (alpha,beta) = (1,0)");
  }
  return alpha * obs_bound + beta;
}

namespace {

nlohmann::json floor_inputs_json(const FloorInputs& f) {
  return {{"M", f.M},
          {"delta", f.delta},
          {"epsilon", f.epsilon},
          {"info", f.info},
          {"provenance", f.provenance}};
}

}  // namespace

nlohmann::json BoundReport::to_json() const {
  nlohmann::json j;
  j["floor"] = floor;
  j["ceiling"] = ceiling;
  j["interval_valid"] = interval_valid;
  if (floor_exact) {
    j["floor_exact"] = *floor_exact;
    j["floor_exact_inputs"] = floor_inputs_json(*floor_exact_inputs);
  }
  if (floor_capacity) {
    j["floor_capacity"] = *floor_capacity;
    j["floor_capacity_inputs"] = floor_inputs_json(*floor_capacity_inputs);
  }
  j["ceiling_inputs"] = {{"emp_risk", ceiling_inputs.emp_risk},
                         {"kl", ceiling_inputs.kl},
                         {"m", ceiling_inputs.m},
                         {"delta_conf", ceiling_inputs.delta_conf},
                         {"cbar", ceiling_inputs.cbar},
                         {"ius", ceiling_inputs.ius},
                         {"rho", ceiling_inputs.rho},
                         {"kl_prior", ceiling_inputs.kl_prior},
                         {"kl_provenance", ceiling_inputs.kl_provenance}};
  if (ceiling_inputs.eta) j["ceiling_inputs"]["eta"] = *ceiling_inputs.eta;
  return j;
}

std::string BoundReport::csv_header() {
  return "floor_exact,floor_capacity,floor,ceiling,interval_valid,emp_risk,kl,m,delta_conf";
}

std::string BoundReport::csv_row() const {
  std::ostringstream os;
  const auto opt = [](const std::optional<double>& v) {
    return v ? numfmt::format_double(*v) : std::string();
  };
  os << opt(floor_exact) << ',' << opt(floor_capacity) << ',' << numfmt::format_double(floor)
     << ',' << numfmt::format_double(ceiling) << ',' << (interval_valid ? 1 : 0) << ','
     << numfmt::format_double(ceiling_inputs.emp_risk) << ','
     << numfmt::format_double(ceiling_inputs.kl) << ',' << ceiling_inputs.m << ','
     << numfmt::format_double(ceiling_inputs.delta_conf);
  return os.str();
}

BoundReport bound_report(const std::optional<FloorInputs>& exact,
                         const std::optional<FloorInputs>& capacity,
                         const CeilingInputs& c) {
  if (!exact && !capacity) {
    throw validation_error("bound_report: need at least one floor variant");
  }
  BoundReport r;
  r.floor_exact_inputs = exact;
  r.floor_capacity_inputs = capacity;
  if (exact) r.floor_exact = fano_floor(*exact);
  if (capacity) r.floor_capacity = fano_floor(*capacity);
  r.floor = std::max(r.floor_exact.value_or(0.0), r.floor_capacity.value_or(0.0));
  r.ceiling_inputs = c;
  r.ceiling = pacbayes_ceiling(c);
  r.interval_valid = r.floor <= r.ceiling;
  return r;
}

}  // namespace capint::bounds
