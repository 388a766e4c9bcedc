#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>

namespace spcnet {

/// Tensor extents do not line up for the requested operation.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// A caller-supplied argument is outside the operation's domain.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// An internal pre/post condition between components was violated.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DeterminismError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed binary input (checkpoints).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed text input; carries the 1-based line number.
struct ParseError : std::runtime_error {
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

std::string shape_string(std::span<const std::size_t> shape);

}  // namespace spcnet
