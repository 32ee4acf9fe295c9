#pragma once

#include <stdexcept>
#include <string>

namespace epibias {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument or configuration value was violated.
class InvalidArgument : public Error {
  public:
    using Error::Error;
};

/// An iterative procedure (root finding, optimization, simulation) failed.
class ConvergenceError : public Error {
  public:
    using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message)
{
    if (!condition) {
        throw InvalidArgument(message);
    }
}

} // namespace detail
} // namespace epibias
