#pragma once

#include <stdexcept>
#include <string>

namespace safecert {

// Configuration file problems carry the offending position.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& origin, int line, int col, const std::string& what)
      : std::runtime_error(origin + ":" + std::to_string(line) + ":" +
                           std::to_string(col) + ": " + what),
        line(line),
        col(col) {}
  int line;
  int col;
};

// Non-finite losses or gradients during training.
class TrainingFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Requested smoothing percentile saturates the Gaussian CDF; the caller
// should fall back to the epsilon cap.
class SmoothingRangeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed weight files, version or shape mismatches.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace safecert
