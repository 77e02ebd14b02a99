#pragma once

#include <stdexcept>
#include <string>

namespace lppl {

// Malformed or invalid user input (CSV rows, config keys, spec files).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Model evaluated at or beyond the critical time.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// A numerical procedure could not produce a result.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The linear slaving system has (numerically) dependent columns.
class RankDeficientError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

} // namespace lppl
