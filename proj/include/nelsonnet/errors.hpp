#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nelsonnet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (length mismatch, bad partition, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A massless grid would contain a mode with vanishing dispersion.
class InfraredError : public Error {
 public:
  using Error::Error;
};

/// A basis or dense matrix would exceed the configured dimension cap.
class SizeError : public Error {
 public:
  SizeError(const std::string& what, std::size_t requested, std::size_t cap)
      : Error(what + " (requested dimension " + std::to_string(requested) +
              ", cap " + std::to_string(cap) + ")"),
        requested_(requested),
        cap_(cap) {}

  std::size_t requested() const noexcept { return requested_; }
  std::size_t cap() const noexcept { return cap_; }

 private:
  std::size_t requested_;
  std::size_t cap_;
};

/// An iterative eigensolver or Krylov method failed to converge.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace nelsonnet
