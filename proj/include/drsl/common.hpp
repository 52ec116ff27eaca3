#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace drsl {

inline constexpr std::uint8_t kIgnore = 255;

enum class Domain : std::uint8_t { kSource = 0, kTarget = 1 };

inline const char* to_string(Domain d) { return d == Domain::kSource ? "source" : "target"; }

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a training loss turns non-finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace drsl
