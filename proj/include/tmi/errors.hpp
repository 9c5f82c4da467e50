#pragma once

#include <stdexcept>
#include <string>

namespace tmi {

/// Raised for malformed inputs: bad qubit indices, mismatched dimensions,
/// out-of-range parameters.
class InvalidArgument : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a request would exceed the configured memory or dense-size
/// budget. The message carries the required size.
class ResourceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

private:
  double residual_;
};

/// No finite inverse temperature reproduces the requested energy.
class NoFiniteBeta : public std::runtime_error {
public:
  enum class Edge { lower, upper, cap };
  NoFiniteBeta(const std::string& what, Edge edge)
      : std::runtime_error(what), edge_(edge) {}
  Edge edge() const noexcept { return edge_; }

private:
  Edge edge_;
};

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace tmi
