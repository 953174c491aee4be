#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

namespace nerd {

/// Raised when a numeric quantity (loss, gradient, voxel) stops being finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

inline bool all_finite(std::span<const double> values) {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace nerd
