#pragma once

#include <array>
#include <cstdint>

namespace fbmxcov::rng {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

// Philox4x32 with 10 rounds (Salmon et al., Random123).
PhiloxCounter philox4x32_10(PhiloxCounter counter, PhiloxKey key);

// Stream number `stream` under root seed `root`. Draws are a pure function of
// (root, stream, position), so any path can be regenerated on its own.
class PhiloxStream {
 public:
  PhiloxStream(std::uint64_t root, std::uint64_t stream);

  std::uint32_t next_u32();
  // Uniform on the open interval (0, 1) with 53 random bits.
  double next_uniform();
  // Standard normal by Box-Muller; draws come in pairs.
  double next_normal();

 private:
  void refill();

  PhiloxKey key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  PhiloxCounter buffer_{};
  int used_ = 4;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fbmxcov::rng
