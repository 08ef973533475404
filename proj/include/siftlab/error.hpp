#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace siftlab {

/// Root of every error raised by the library. Each subclass maps to one
/// failure category so callers (and the CLI exit codes) can dispatch on type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class InvalidState : public Error {
public:
    using Error::Error;
};

/// A Sift step was called in the wrong phase (warmup vs. approximate).
class PhaseError : public Error {
public:
    using Error::Error;
};

/// R^2 is undefined when the observed log-quantiles have zero variance.
class DegenerateVariance : public Error {
public:
    using Error::Error;
};

/// Relative error is undefined against a zero reference vector.
class DegenerateInput : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed trace file. `offset()` is the byte position where parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

}  // namespace siftlab
