#pragma once

#include <stdexcept>
#include <string>

namespace deadbeat {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unknown catalog model name.
class CatalogError : public Error {
 public:
  using Error::Error;
};

/// Model parameters violate an invariant of the model family.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Time or window bounds that do not land on the sample grid.
class GridError : public Error {
 public:
  using Error::Error;
};

/// Operation requested on a model of unsupported dimensions.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A state left the finite range during integration.
class DivergenceError : public Error {
 public:
  DivergenceError(double t, const std::string& what)
      : Error(what + " (t = " + std::to_string(t) + ")"), time_(t) {}

  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// The observability Gramian of a window is not positive definite.
class ObservabilityError : public Error {
 public:
  ObservabilityError(double window_start, double min_pivot, const std::string& what)
      : Error(what), window_start_(window_start), min_pivot_(min_pivot) {}

  double window_start() const noexcept { return window_start_; }
  double min_pivot() const noexcept { return min_pivot_; }

 private:
  double window_start_;
  double min_pivot_;
};

/// Invalid experiment configuration. Carries the offending field path and source line.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, int line, const std::string& reason)
      : Error(format(field, line, reason)), field_(std::move(field)), line_(line) {}

  const std::string& field() const noexcept { return field_; }
  /// 1-based line in the config document, 0 when unknown.
  int line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& field, int line, const std::string& reason) {
    std::string s = "config error";
    if (line > 0) s += " at line " + std::to_string(line);
    s += " in field '" + field + "': " + reason;
    return s;
  }

  std::string field_;
  int line_;
};

}  // namespace deadbeat
