#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dustnet {

using BitVector = std::vector<std::uint8_t>;  // one bit (0/1) per element

/// `width` low bits of `value`, MSB first.
inline void append_bits(BitVector& out, std::uint64_t value, int width) {
  for (int b = width - 1; b >= 0; --b) out.push_back(static_cast<std::uint8_t>((value >> b) & 1U));
}

inline BitVector to_bits(std::uint64_t value, int width) {
  BitVector out;
  out.reserve(static_cast<std::size_t>(width));
  append_bits(out, value, width);
  return out;
}

/// Reads `width` bits MSB first starting at `pos`.
inline std::uint64_t read_bits(std::span<const std::uint8_t> bits, std::size_t pos, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v = (v << 1) | (bits[pos + static_cast<std::size_t>(i)] & 1U);
  return v;
}

}  // namespace dustnet
