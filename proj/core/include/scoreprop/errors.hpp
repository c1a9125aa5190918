#pragma once

#include <stdexcept>
#include <string>

namespace scoreprop {

/// Thrown when tensor or layer geometry does not compose.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Thrown on file-format and filesystem failures.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace scoreprop
