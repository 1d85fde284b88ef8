#pragma once

#include <stdexcept>
#include <string>

namespace driftlab {

// Bad user-facing configuration (schema violations, invalid ranges).
// Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Non-finite values produced during sampling or training.
// Maps to CLI exit code 3.
class NumericFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

} // namespace driftlab
