#pragma once

#include <cstdint>

#include "dustnet/bits.hpp"

namespace dustnet {

inline constexpr std::uint32_t kLfsrPeriod = 65535;

struct LfsrStep {
  std::uint16_t state;
  std::uint8_t bit;  // bit shifted out
};

/// One Fibonacci step of x^16 + x^15 + x^13 + x^4 + 1. Throws DomainError on state 0.
LfsrStep lfsr_step(std::uint16_t state);

/// Implant PRBS seed: the ID with bit 0 forced to 1, so the state is never 0.
constexpr std::uint16_t lfsr_seed_for(std::uint8_t implant_id) noexcept {
  return static_cast<std::uint16_t>(implant_id | 1U);
}

class Lfsr16 {
 public:
  explicit Lfsr16(std::uint16_t seed);

  std::uint8_t next_bit();
  /// `width` bits packed MSB first (first generated bit is the MSB).
  std::uint32_t next_word(int width);
  std::uint16_t state() const noexcept { return state_; }

 private:
  std::uint16_t state_;
};

/// First `n` output bits from `seed`.
BitVector lfsr_sequence(std::uint16_t seed, std::size_t n);

}  // namespace dustnet
