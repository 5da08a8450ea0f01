#pragma once

#include <stdexcept>
#include <string>

namespace stric {

/// Malformed or inconsistent configuration (unknown key, out-of-range value).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Bad input data: ragged CSV rows, non-finite cells, series too short.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure: non-finite loss, failed factorization, divergence.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace stric
