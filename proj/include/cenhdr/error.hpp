#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cenhdr {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A tensor axis disagrees with what an operator requires.
class DimensionError : public Error {
public:
    DimensionError(const std::string& op, const std::string& axis, const std::string& detail)
        : Error(op + ": dimension mismatch on axis '" + axis + "': " + detail), axis_(axis) {}

    const std::string& axis() const noexcept { return axis_; }

private:
    std::string axis_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// File-format failures. Each distinct failure mode has its own type so
// callers (and tests) can tell them apart.
class FormatError : public Error {
public:
    using Error::Error;
};
class UnsupportedFormatError : public FormatError {
public:
    using FormatError::FormatError;
};
class CorruptHeaderError : public FormatError {
public:
    using FormatError::FormatError;
};
class DimensionOverflowError : public FormatError {
public:
    using FormatError::FormatError;
};
class ChecksumError : public FormatError {
public:
    using FormatError::FormatError;
};
class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};
class ShapeMismatchError : public FormatError {
public:
    using FormatError::FormatError;
};

class DatasetError : public Error {
public:
    using Error::Error;
};

/// Raised when training produces a NaN/Inf loss.
class NumericError : public Error {
public:
    NumericError(const std::string& what, std::int64_t step) : Error(what), step_(step) {}
    std::int64_t step() const noexcept { return step_; }

private:
    std::int64_t step_;
};

}  // namespace cenhdr
