#include "dustnet/lfsr.hpp"

#include "dustnet/errors.hpp"

namespace dustnet {

LfsrStep lfsr_step(std::uint16_t state) {
  if (state == 0) throw DomainError("LFSR state must be nonzero");
  const unsigned s = state;
  const unsigned fb = (s ^ (s >> 1) ^ (s >> 3) ^ (s >> 12)) & 1U;
  return {static_cast<std::uint16_t>((s >> 1) | (fb << 15)), static_cast<std::uint8_t>(s & 1U)};
}

Lfsr16::Lfsr16(std::uint16_t seed) : state_(seed) {
  if (seed == 0) throw DomainError("LFSR seed must be nonzero");
}

std::uint8_t Lfsr16::next_bit() {
  const auto step = lfsr_step(state_);
  state_ = step.state;
  return step.bit;
}

std::uint32_t Lfsr16::next_word(int width) {
  std::uint32_t w = 0;
  for (int i = 0; i < width; ++i) w = (w << 1) | next_bit();
  return w;
}

BitVector lfsr_sequence(std::uint16_t seed, std::size_t n) {
  Lfsr16 lfsr(seed);
  BitVector out(n);
  for (auto& b : out) b = lfsr.next_bit();
  return out;
}

}  // namespace dustnet
