#pragma once

#include <stdexcept>
#include <string>

namespace flavr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extent / axis disagreement. Message names the offending axis.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File and directory problems (missing, truncated, malformed).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace flavr
