#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace avaccel {

/// Root of every error the library raises.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes, bad axes, or inputs that don't fit a layer.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf in a result, or a diverged training run.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration values or JSON schema violations.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Missing files, unreadable datasets, mismatched model kinds.
class DataError : public Error {
public:
    using Error::Error;
};

/// Malformed `.avsg` / `.avnm` streams.
class FormatError : public DataError {
public:
    enum class Kind { bad_magic, version_mismatch, crc_mismatch, truncated, invalid_field };

    FormatError(Kind kind, std::string message, std::optional<std::size_t> frame = std::nullopt)
        : DataError(std::move(message)), kind_(kind), frame_(frame) {}

    Kind kind() const noexcept { return kind_; }
    /// Index of the offending frame, when the error is local to one frame.
    std::optional<std::size_t> frame() const noexcept { return frame_; }

private:
    Kind kind_;
    std::optional<std::size_t> frame_;
};

}  // namespace avaccel
