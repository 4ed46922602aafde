#pragma once

#include <stdexcept>
#include <string>

namespace pan {

// Shapes that do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A scalar argument outside its legal range (dropout p >= 1, mu <= 0, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Grid coordinates out of bounds or duplicated.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// NaN or Inf produced where only finite values are legal.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pan
