#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dustnet/bits.hpp"
#include "json.hpp"

namespace dustnet {

inline constexpr std::size_t kSyncWindowBits = 32;
inline constexpr double kSyncCorrelation = 0.9;
inline constexpr double kPacketAcceptErrorFraction = 0.25;
inline constexpr int kRealignSearchWords = 32;

struct BERReport {
  std::uint64_t bits_compared = 0;
  std::uint64_t bit_errors = 0;
  double ber_point = 0.0;
  double ber_upper_bound = 1.0;  // max(point, 1/bits) when there are no errors
  int bits_per_symbol = 1;
  std::vector<std::vector<std::uint64_t>> per_level_confusion;  // [sent][received]
  bool synced = false;
  std::uint64_t sync_failures = 0;
  std::uint64_t packets_compared = 0;
  std::int64_t alignment_offset = -1;  // reference phase of the first compared bit

  void reset_confusion(int bits_per_symbol);
  void finalize() noexcept;
  void merge(const BERReport& other);
  nlohmann::json to_json() const;
};

/// One full period of the PRBS from `seed`.
class LfsrReference {
 public:
  explicit LfsrReference(std::uint16_t seed);
  std::uint8_t at(std::int64_t phase) const noexcept;
  std::size_t period() const noexcept { return bits_.size(); }
  /// Reference phase p such that bits[pos..pos+32) matches the reference from p with
  /// bipolar correlation above 0.9.
  std::optional<std::int64_t> sync(std::span<const std::uint8_t> bits, std::size_t pos) const;
  /// Mismatches of `bits` against the reference starting at `phase`.
  std::uint64_t errors_at(std::span<const std::uint8_t> bits, std::int64_t phase) const noexcept;

 private:
  BitVector bits_;
  std::vector<std::uint32_t> windows_;  // 32-bit window starting at each phase, MSB = first bit
};

/// Aligns a contiguous received stream against the PRBS by 32-bit sliding
/// correlation, then counts mismatches over the whole stream.
BERReport compute_ber(std::span<const std::uint8_t> received, std::uint16_t seed, int bits_per_symbol = 1);

/// Per-packet variant tolerant of dropped FIFO words: each packet takes the
/// best phase within +-32 words of the one following the previous packet
/// (ties go to that phase), else a fresh correlation search. Packets ahead of
/// the first lock are aligned backwards from it. A packet is accepted when at
/// most a quarter of its bits disagree; otherwise it counts as a sync failure.
BERReport compute_ber_packets(std::span<const BitVector> packets, std::uint16_t seed, int bits_per_symbol,
                              int word_bits);

}  // namespace dustnet
