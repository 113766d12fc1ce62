#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedsim {

/// Bad arguments to a library operation: shape mismatch, out-of-range index,
/// negative threshold, too few samples, and the like.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The operation is undefined for the given model kind
/// (e.g. classification accuracy of a regression model).
class Unsupported : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed external file (IDX or CSV); the message carries the location.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid experiment configuration. `field()` names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A parameter became non-finite during optimization. Carries as much
/// location context as is known at the throw site; the engine fills in the
/// round and client before re-throwing.
class NumericalDivergence : public std::runtime_error {
 public:
  static constexpr std::size_t kUnknown = static_cast<std::size_t>(-1);

  explicit NumericalDivergence(const std::string& message,
                               std::size_t step = kUnknown)
      : std::runtime_error(message), step_(step) {}

  std::size_t step() const noexcept { return step_; }
  std::size_t client() const noexcept { return client_; }
  std::size_t round() const noexcept { return round_; }
  void set_client(std::size_t c) noexcept { client_ = c; }
  void set_round(std::size_t r) noexcept { round_ = r; }

 private:
  std::size_t step_ = kUnknown;
  std::size_t client_ = kUnknown;
  std::size_t round_ = kUnknown;
};

}  // namespace fedsim
