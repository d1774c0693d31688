#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace thermofuse {

/// Base class for every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Image or tensor dimensions do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid or unsatisfiable configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Least-squares problem without a unique solution.
class CalibrationError : public Error {
public:
    using Error::Error;
};

/// Malformed file; carries the byte offset where parsing stopped.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// Filesystem failure.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace thermofuse
