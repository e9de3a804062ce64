#include "dustnet/manchester.hpp"

#include <string>

namespace dustnet {

ManchesterViolation::ManchesterViolation(std::size_t pair_index)
    : std::runtime_error("Manchester coding violation at pair " + std::to_string(pair_index)),
      pair_index_(pair_index) {}

BitVector manchester_encode(std::span<const std::uint8_t> bits) {
  BitVector out;
  out.reserve(bits.size() * 2);
  for (auto b : bits) {
    out.push_back(b ? 1 : 0);
    out.push_back(b ? 0 : 1);
  }
  return out;
}

BitVector manchester_decode(std::span<const std::uint8_t> symbols) {
  if (symbols.size() % 2 != 0) throw ManchesterViolation(symbols.size() / 2);
  BitVector out(symbols.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto a = symbols[2 * i] & 1U;
    const auto b = symbols[2 * i + 1] & 1U;
    if (a == b) throw ManchesterViolation(i);
    out[i] = static_cast<std::uint8_t>(a);
  }
  return out;
}

}  // namespace dustnet
