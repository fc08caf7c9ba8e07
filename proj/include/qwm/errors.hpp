#pragma once

#include <stdexcept>
#include <string>

namespace qwm {

/// Malformed or inconsistent user configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical procedure could not produce a trustworthy result (CLI exit code 3).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Not enough input data for a fit or estimate.
class InsufficientDataError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

} // namespace qwm
