#pragma once

#include <stdexcept>
#include <string>

namespace atlas {

// Bad build-time configuration: dimensions that do not divide, malformed
// config files, inconsistent hyperparameters. CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse at runtime: shape mismatches between tensors, missing or stale
// backward contexts. Distinct from ConfigError so callers can tell a bad
// config file from a bug in calling code.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void config_check(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

inline void usage_check(bool ok, const std::string& msg) {
    if (!ok) throw UsageError(msg);
}

// Internal invariant violations (layout bugs, impossible states).
inline void internal_check(bool ok, const std::string& msg) {
    if (!ok) throw std::logic_error("internal invariant violated: " + msg);
}

}  // namespace atlas
