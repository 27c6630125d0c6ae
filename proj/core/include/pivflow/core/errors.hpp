#pragma once

#include <stdexcept>
#include <string>

namespace pivflow {

/// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// A documented precondition of an operation was violated by the caller.
struct PreconditionError : Error {
    explicit PreconditionError(const std::string& msg) : Error(msg) {}
};

/// Two arrays that must share a shape do not.
struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& msg) : Error(msg) {}
};

/// Filesystem-level read/write failure.
struct IOFailure : Error {
    explicit IOFailure(const std::string& msg) : Error(msg) {}
};

} // namespace pivflow
