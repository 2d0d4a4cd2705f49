#pragma once

#include <stdexcept>
#include <string>

namespace meshfit {

// Bad user input: config keys, CLI arguments, malformed files.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem-level failures (unreadable input, unwritable output directory).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite losses, degenerate projections, diverged optimization.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace meshfit
