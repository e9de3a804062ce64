#pragma once

#include <stdexcept>
#include <string>

namespace dustnet {

/// Invalid parameter values, scenario content or register fields.
/// The CLI maps this to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A timing budget that cannot be met (pulse windows, RX gates, frames).
/// `term()` names the quantity that overflowed. The CLI maps this to exit code 2.
class ScheduleError : public std::runtime_error {
 public:
  ScheduleError(std::string term, const std::string& message);
  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed file (DNWF, CSV, JSON).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dustnet
