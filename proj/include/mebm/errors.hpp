#pragma once

#include <stdexcept>
#include <string>

namespace mebm {

// Error taxonomy. The CLI maps these onto process exit codes:
// ConfigError -> 2, IoError -> 3, NumericError -> 4.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file contents (bad magic, bad version, bad field encoding).
struct FormatError : IoError {
    explicit FormatError(const std::string& msg) : IoError(msg) {}
};

// Declared sizes disagree with the actual payload.
struct LengthError : IoError {
    explicit LengthError(const std::string& msg) : IoError(msg) {}
};

// Header fields are unusable (non-finite or non-positive rates, etc.).
struct HeaderError : IoError {
    explicit HeaderError(const std::string& msg) : IoError(msg) {}
};

// Value cannot be represented in the on-disk encoding.
struct EncodingError : IoError {
    explicit EncodingError(const std::string& msg) : IoError(msg) {}
};

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// A filter matched nothing.
struct EmptySelectionError : std::runtime_error {
    explicit EmptySelectionError(const std::string& msg) : std::runtime_error(msg) {}
};

// An operation was asked to produce an empty or impossible result.
struct DegenerateError : std::runtime_error {
    explicit DegenerateError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values encountered during numeric evaluation.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mebm
