#pragma once

#include <stdexcept>
#include <string>

namespace hilearn {

// Bad caller input: wrong dimensions, out-of-range labels, malformed files.
struct InputError : std::invalid_argument {
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

// Non-finite value produced during a forward or backward pass.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Conditioning event with zero mass (empty preimage mass, empty fold stratum).
struct DegenerateConditionalError : std::runtime_error {
  explicit DegenerateConditionalError(const std::string& what)
      : std::runtime_error(what) {}
};

inline constexpr const char* kVersion = "hilearn 0.1.0";

}  // namespace hilearn
