#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dustnet {

enum class PulseKind { Config, Uplink };

enum class Section {
  ChargeUp,
  Preamble,
  DownlinkData,
  UplinkWindow,
  HeaderWindow,
  DataWindow,
};

std::string_view to_string(Section s) noexcept;
std::string_view to_string(PulseKind k) noexcept;

/// A run of symbols at a fixed cycles-per-symbol. Amplitudes are relative to
/// the maximum TX amplitude; a constant tone is a single symbol.
struct Segment {
  Section section = Section::ChargeUp;
  std::string label;
  std::vector<double> amplitudes;
  int cycles_per_symbol = 1;
  std::vector<std::uint8_t> symbols;  // on-air symbol values when the segment carries data

  std::int64_t cycles() const noexcept {
    return static_cast<std::int64_t>(amplitudes.size()) * cycles_per_symbol;
  }
};

/// Symbolic description of one transmitted pulse prior to synthesis.
struct PulseDescriptor {
  PulseKind kind = PulseKind::Uplink;
  std::vector<Segment> segments;
  double carrier_freq = 2e6;
  int cycles_per_symbol = 4;  // symbol width of the uplink windows
  std::uint8_t target_id = 0;
  bool mode_switch = false;   // Config pulse carrying the reserved ID 0

  std::int64_t total_cycles() const noexcept;
  /// Cycles up to the end of the last segment with non-zero drive.
  std::int64_t tx_cycles() const noexcept;
  double duration() const noexcept { return static_cast<double>(total_cycles()) / carrier_freq; }

  /// Cycle offset at which the first segment with the given label / section starts.
  /// Throws ConfigError if absent.
  std::int64_t offset_of(std::string_view label) const;
  std::int64_t offset_of(Section section) const;
  const Segment& segment(std::string_view label) const;
  bool has_segment(std::string_view label) const noexcept;

  /// Section-structure and duration invariants. Throws ConfigError.
  void validate() const;
};

/// TDMA frame timing.
struct FrameSchedule {
  double pulse_period = 237.5e-6;  // s
  int pulses_per_frame = 8;
  double rx_gate_offset = 0.0;     // s, one time of flight
  double frame_duration = 0.0;     // s

  static FrameSchedule make(double pulse_period, int pulses_per_frame, double time_of_flight);
  void validate() const;
};

struct RxGate {
  double open = 0.0;   // s
  double close = 0.0;  // s
  double duration() const noexcept { return close - open; }
};

}  // namespace dustnet
