#pragma once

#include <stdexcept>
#include <string>

namespace qkfp {

/// Parameter outside the admissible set of a model operation
/// (e.g. a boson beta at or above (2*pi)^{d/2}).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Supercritical bosonic mass: no smooth equilibrium carries it.
class NoEquilibriumError : public DomainError {
public:
    using DomainError::DomainError;
};

/// Two fields sampled on different grids were combined.
class GridMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Unrecoverable numerical failure during time stepping (NaN, blow-up).
class SolverFault : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or invalid scenario configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace qkfp
