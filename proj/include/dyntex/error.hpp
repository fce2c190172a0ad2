#pragma once

#include <stdexcept>
#include <string>

namespace dyntex {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor extents that do not fit an operation. `dimension()` names the
/// offending axis (e.g. "input channels", "kernel height").
class ShapeError : public Error {
public:
    ShapeError(const std::string& where, std::string dimension, std::size_t expected,
               std::size_t actual)
        : Error(where + ": " + dimension + " mismatch (expected " + std::to_string(expected) +
                ", got " + std::to_string(actual) + ")"),
          dimension_(std::move(dimension)) {}

    ShapeError(const std::string& where, std::string dimension, const std::string& detail)
        : Error(where + ": " + dimension + ": " + detail), dimension_(std::move(dimension)) {}

    const std::string& dimension() const noexcept { return dimension_; }

private:
    std::string dimension_;
};

/// Malformed or truncated file content.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value. `key()` is the dotted path of the offending key.
class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& message)
        : Error(key.empty() ? message : key + ": " + message), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

}  // namespace dyntex
