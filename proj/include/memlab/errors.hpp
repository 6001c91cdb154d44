#pragma once

#include <stdexcept>
#include <string>

namespace memlab {

// Error taxonomy shared by every module. The CLI maps these onto exit codes.

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UndefinedMetric : std::domain_error {
  using std::domain_error::domain_error;
};

}  // namespace memlab
