#pragma once

#include <stdexcept>
#include <string>

namespace stochmed {

// Bad user input: malformed files, unknown columns, invalid options.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// The data do not support the requested estimate (empty strata, no support
// for an instrument level, unstable bootstrap).
class EstimationError : public std::runtime_error {
public:
    explicit EstimationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace stochmed
