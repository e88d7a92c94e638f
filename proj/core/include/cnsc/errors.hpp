#pragma once

#include <stdexcept>
#include <string>

namespace cnsc {

// Dimension disagreement between an input and a network or buffer.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation (t < 0, ...).
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Operation called out of order, e.g. backward before forward.
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

// Non-finite value where a finite one is required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input data unusable for the requested fit (e.g. single-class treatment).
struct DegenerateDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File or stream failure.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration or malformed input file.
struct UserError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cnsc
