#include "dustnet/link_config.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dustnet/errors.hpp"

namespace dustnet {
namespace {

constexpr double kIdacBase = 4e-6;
constexpr double kIdacStep = 2.4e-6;

int cps_index(int cps) {
  const auto it = std::find(kCyclesPerSymbolOptions.begin(), kCyclesPerSymbolOptions.end(), cps);
  if (it == kCyclesPerSymbolOptions.end()) throw ConfigError("cycles_per_symbol must be one of 4..16 even");
  return static_cast<int>(it - kCyclesPerSymbolOptions.begin());
}

}  // namespace

int slice_start(AdcSlice s) noexcept { return static_cast<int>(s); }

std::string_view to_string(AdcSlice s) noexcept {
  switch (s) {
    case AdcSlice::S0_7: return "S0_7";
    case AdcSlice::S1_9: return "S1_9";
    case AdcSlice::S2_10: return "S2_10";
    case AdcSlice::S3_11: return "S3_11";
  }
  return "?";
}

AdcSlice parse_adc_slice(std::string_view name) {
  for (auto s : {AdcSlice::S0_7, AdcSlice::S1_9, AdcSlice::S2_10, AdcSlice::S3_11}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown adc_slice '" + std::string(name) + "'");
}

double idac_grid_current(int index) {
  if (index < 0 || index > 15) throw ConfigError("idac grid index must be in 0..15");
  return kIdacBase + kIdacStep * index;
}

int idac_grid_index(double current) {
  const double k = (current - kIdacBase) / kIdacStep;
  const long r = std::lround(k);
  if (r < 0 || r > 15 || std::abs(k - static_cast<double>(r)) > 1e-6) {
    throw ConfigError("idac_unit_current must be 4 uA + k * 2.4 uA, k = 0..15");
  }
  return static_cast<int>(r);
}

int LinkConfig::bits_per_symbol() const noexcept {
  switch (ask_levels) {
    case 2: return 1;
    case 4: return 2;
    case 8: return 3;
    case 16: return 4;
    default: return 0;
  }
}

void LinkConfig::validate() const {
  if (implant_id == 0) throw ConfigError("implant_id 0 is reserved");
  idac_grid_index(idac_unit_current);
  if (samples_per_packet < 1 || samples_per_packet > kMaxSamplesPerPacket) {
    throw ConfigError("samples_per_packet must be in 1..16");
  }
  if (bits_per_symbol() == 0) throw ConfigError("ask_levels must be 2, 4, 8 or 16");
  if (n_implants < 1 || n_implants > kMaxImplants) throw ConfigError("n_implants must be in 1..8");
  if (uplink_index < 1 || uplink_index > kMaxImplants) throw ConfigError("uplink_index must be in 1..8");
  if (uplink_index > n_implants) throw ConfigError("uplink_index must not exceed n_implants");
  cps_index(cycles_per_symbol);
}

bool LinkConfig::same_registers(const LinkConfig& o) const noexcept {
  return idac_unit_current == o.idac_unit_current && samples_per_packet == o.samples_per_packet &&
         ask_levels == o.ask_levels && n_implants == o.n_implants && uplink_index == o.uplink_index &&
         lfsr_enable == o.lfsr_enable && cycles_per_symbol == o.cycles_per_symbol &&
         adc_slice == o.adc_slice;
}

BitVector encode_config_payload(const LinkConfig& r, std::uint8_t target_id) {
  LinkConfig check = r;
  check.implant_id = 1;  // the ID register is not part of the payload
  check.validate();
  BitVector bits;
  bits.reserve(kConfigPayloadBits);
  append_bits(bits, target_id, 8);
  append_bits(bits, static_cast<std::uint64_t>(idac_grid_index(r.idac_unit_current)), 4);
  append_bits(bits, static_cast<std::uint64_t>(r.samples_per_packet - 1), 4);
  append_bits(bits, static_cast<std::uint64_t>(r.bits_per_symbol() - 1), 2);
  append_bits(bits, static_cast<std::uint64_t>(r.n_implants - 1), 3);
  append_bits(bits, static_cast<std::uint64_t>(r.uplink_index - 1), 3);
  append_bits(bits, r.lfsr_enable ? 1 : 0, 1);
  append_bits(bits, static_cast<std::uint64_t>(cps_index(r.cycles_per_symbol)), 3);
  append_bits(bits, static_cast<std::uint64_t>(slice_start(r.adc_slice)), 2);
  append_bits(bits, 0, 18);
  return bits;
}

ConfigPayload decode_config_payload(std::span<const std::uint8_t> bits) {
  if (bits.size() != kConfigPayloadBits) throw ConfigError("config payload must be 48 bits");
  ConfigPayload p;
  std::size_t pos = 0;
  auto take = [&](int w) {
    const auto v = read_bits(bits, pos, w);
    pos += static_cast<std::size_t>(w);
    return static_cast<int>(v);
  };
  p.target_id = static_cast<std::uint8_t>(take(8));
  LinkConfig& r = p.registers;
  r.implant_id = 0;
  r.idac_unit_current = idac_grid_current(take(4));
  r.samples_per_packet = take(4) + 1;
  r.ask_levels = 1 << (take(2) + 1);
  r.n_implants = take(3) + 1;
  r.uplink_index = take(3) + 1;
  r.lfsr_enable = take(1) != 0;
  const int cps = take(3);
  if (cps >= static_cast<int>(kCyclesPerSymbolOptions.size())) throw ConfigError("invalid cycles_per_symbol index");
  r.cycles_per_symbol = kCyclesPerSymbolOptions[static_cast<std::size_t>(cps)];
  r.adc_slice = static_cast<AdcSlice>(take(2));
  if (take(18) != 0) throw ConfigError("reserved payload bits must be zero");
  if (r.uplink_index > r.n_implants) throw ConfigError("uplink_index exceeds n_implants");
  return p;
}

}  // namespace dustnet
