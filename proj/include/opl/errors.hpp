#pragma once

#include <stdexcept>
#include <string>

namespace opl {

/// Malformed or out-of-range argument.
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A size exceeds a configured hard cap.
struct CapacityError : std::length_error {
  using std::length_error::length_error;
};

/// An experiment or environment configuration cannot be satisfied.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Located failure while reading an input file.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values produced during a computation.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A model was queried on an action outside its support.
struct UnsupportedAction : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// An estimator precondition (e.g. positive propensity) does not hold.
struct PreconditionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace opl
