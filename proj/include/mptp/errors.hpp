#pragma once

#include <stdexcept>
#include <string>

namespace mptp {

// Bad inputs: dimension mismatches, invalid configuration values, grid mismatches.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation is only defined for some dimensions (e.g. exact W2 needs d == 1).
class UnsupportedDimension : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UnimplementedKernel : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Output files could not be written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/inf produced while integrating or evaluating.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Iterative solver hit its iteration cap. Solvers throw a derived type that
// carries their best iterate.
class NonConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mptp
