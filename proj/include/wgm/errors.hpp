#pragma once

#include <stdexcept>
#include <string>

namespace wgm {

// Input outside the domain of a physical formula (negative radius, n_S <= 1, ...).
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

// Caller passed something structurally wrong (wrong scan kind, unknown q, empty trace).
class UsageError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// The analysis pipeline refused the data (no recognizable multiplet, too few lines).
class AnalysisError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Numerical failure in a fit or quadrature.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed file or config.
class SchemaError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace wgm
