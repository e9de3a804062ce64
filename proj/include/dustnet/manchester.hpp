#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>

#include "dustnet/bits.hpp"

namespace dustnet {

/// Pair "00" or "11" (or a dangling half pair) in a Manchester stream.
class ManchesterViolation : public std::runtime_error {
 public:
  explicit ManchesterViolation(std::size_t pair_index);
  std::size_t pair_index() const noexcept { return pair_index_; }

 private:
  std::size_t pair_index_;
};

/// 1 -> "10", 0 -> "01".
BitVector manchester_encode(std::span<const std::uint8_t> bits);

/// Inverse of manchester_encode. Throws ManchesterViolation.
BitVector manchester_decode(std::span<const std::uint8_t> symbols);

}  // namespace dustnet
