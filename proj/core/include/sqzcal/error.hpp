#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace sqzcal {

// Non-fatal diagnostics collected by operations that degrade gracefully.
using Warnings = std::vector<std::string>;

inline void warn(Warnings* sink, std::string message) {
  if (sink != nullptr) sink->push_back(std::move(message));
}

// Invalid argument to a physics function (x >= 1, eta outside [0,1], ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed or inconsistent input data: traces, grids, files, datasets.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or command-line usage.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Optimizer failed to meet its termination tolerances.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inputs that are individually valid but jointly unphysical.
class PhysicsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sqzcal
