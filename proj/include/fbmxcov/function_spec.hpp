#pragma once

#include "fbmxcov/gclass.hpp"

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fbmxcov {

class SpecParseError : public std::invalid_argument {
 public:
  SpecParseError(const std::string& what, std::size_t position)
      : std::invalid_argument(what + " at position " + std::to_string(position)), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

// spec := atom | "sum:(" spec ")+(" spec ")"
// atom := "sgn" | "id" | "const:" num | "tanh" | "sin"
//       | "steps:" num ":" num ("," num ":" num)*
// Step pairs are (location, jump) with strictly increasing locations.
GFunction parse_function_spec(std::string_view text);

}  // namespace fbmxcov
