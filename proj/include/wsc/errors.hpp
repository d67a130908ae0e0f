#pragma once

#include <stdexcept>
#include <string>

namespace wsc {

// Caller misuse: bad arguments, incompatible shapes, contract violations.
struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Bad configuration or input files (presets, datasets, checkpoints).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : ConfigError {
    ParseError(const std::string& file, long line, const std::string& what)
        : ConfigError(file + ":" + std::to_string(line) + ": " + what) {}
};

// Numerical failure during training (NaN loss, diverged parameters).
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace wsc
