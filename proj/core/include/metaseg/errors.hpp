#pragma once

#include <stdexcept>
#include <string>

namespace metaseg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension or geometry violation (bad shapes, indivisible pooling windows).
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration: bad config file, mismatched mixer params, divisibility.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File format or filesystem failure.
class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API misuse: backward before forward, foreign tape handles, duplicate names.
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace metaseg
