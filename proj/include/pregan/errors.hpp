#pragma once

#include <stdexcept>

#include "pregan/tensor.hpp"

namespace pregan {

// Invalid numeric argument (negative rate, bad config value).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A schedule that cannot be executed on the current cluster.
class ScheduleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input data (NaN features, bad labels, empty datasets).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable or inconsistent persisted file (checkpoint, trace, config).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pregan
