#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>

#include "dustnet/bits.hpp"

namespace dustnet {

/// ADC bit window: the word starts at bit 0..3 of the 12-bit code.
enum class AdcSlice { S0_7, S1_9, S2_10, S3_11 };

int slice_start(AdcSlice s) noexcept;
std::string_view to_string(AdcSlice s) noexcept;
AdcSlice parse_adc_slice(std::string_view name);

inline constexpr std::array<int, 7> kCyclesPerSymbolOptions{4, 6, 8, 10, 12, 14, 16};
inline constexpr std::array<int, 4> kAskLevelOptions{2, 4, 8, 16};
inline constexpr int kMaxImplants = 8;
inline constexpr int kMaxSamplesPerPacket = 16;

/// The 16-entry unit-current register grid, 4 uA to 40 uA.
double idac_grid_current(int index);
/// Grid index of `current`; throws ConfigError when it is not a grid value.
int idac_grid_index(double current);

/// Per-implant register file. implant_id is fixed by the chip pads and is
/// never written over the downlink.
struct LinkConfig {
  std::uint8_t implant_id = 1;
  double idac_unit_current = 28e-6;
  int samples_per_packet = 12;
  int ask_levels = 16;
  int n_implants = 1;
  int uplink_index = 1;
  bool lfsr_enable = true;
  int cycles_per_symbol = 4;
  AdcSlice adc_slice = AdcSlice::S3_11;

  int bits_per_symbol() const noexcept;  // M = log2(ask_levels)
  int word_bits() const noexcept { return ask_levels == 8 ? 9 : 8; }
  int symbols_per_word() const noexcept { return word_bits() / bits_per_symbol(); }
  int data_symbols() const noexcept { return samples_per_packet * symbols_per_word(); }

  /// Throws ConfigError naming the first field out of range.
  void validate() const;

  /// True when the downlink-writable registers match (implant_id excluded).
  bool same_registers(const LinkConfig& other) const noexcept;
};

inline constexpr int kConfigPayloadBits = 48;

struct ConfigPayload {
  std::uint8_t target_id = 0;
  LinkConfig registers;  // implant_id left at 0
};

/// 48-bit payload, MSB first: target_id 8, idac index 4, samples_per_packet-1 4,
/// log2(levels)-1 2, n_implants-1 3, uplink_index-1 3, lfsr 1, cycles index 3,
/// adc slice 2, reserved 18 (zero).
BitVector encode_config_payload(const LinkConfig& registers, std::uint8_t target_id);

/// Throws ConfigError for any out-of-range field or non-zero reserved bits.
ConfigPayload decode_config_payload(std::span<const std::uint8_t> bits);

}  // namespace dustnet
