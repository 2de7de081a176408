#pragma once

#include <stdexcept>
#include <string>

namespace specmarket {

/// Bad input: violated precondition, malformed file, inconsistent config.
class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Training produced a non-finite loss or parameter.
class DivergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace specmarket
