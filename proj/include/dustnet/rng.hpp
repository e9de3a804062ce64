#pragma once

#include <cstdint>
#include <random>

namespace dustnet {

/// Independent random substreams. Every stochastic draw in a run comes from
/// a generator seeded by derive_seed(root, stream, index).
enum class Stream : std::uint64_t {
  ChannelNoise = 1,
  AfeNoise = 2,
  Trial = 3,
  ConfigNoise = 4,
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Counter-based split: the same (root, stream, index) always yields the same seed,
/// distinct triples yield statistically independent seeds.
std::uint64_t derive_seed(std::uint64_t root, Stream stream, std::uint64_t index) noexcept;

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t root, Stream stream, std::uint64_t index) {
  return Rng(derive_seed(root, stream, index));
}

}  // namespace dustnet
