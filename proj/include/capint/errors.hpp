#pragma once

#include <stdexcept>

namespace capint {

// Invalid input data: bad distribution, mismatched shapes, parameter out of range.
class validation_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Mathematical domain violations, e.g. absolute continuity failures in KL.
class domain_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Desk-scale resource caps: alphabet sizes, table cells, enumeration budgets.
class resource_limit_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace capint
