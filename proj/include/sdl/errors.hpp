#pragma once

#include <stdexcept>
#include <string>

namespace sdl {

/// Raised for malformed or inconsistent experiment configuration.
/// The message starts with the offending field path, e.g. "schedule.T: ...".
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(field) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Raised when a numerical guard trips (size limits, log of zero, underflow).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sdl
