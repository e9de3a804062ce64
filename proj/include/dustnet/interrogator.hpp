#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dustnet/bits.hpp"
#include "dustnet/channel.hpp"
#include "dustnet/implant.hpp"
#include "dustnet/link_config.hpp"
#include "dustnet/pulse.hpp"
#include "json.hpp"

namespace dustnet {

inline constexpr double kDownlinkHigh = 1.0;
inline constexpr double kDownlinkLow = 0.5;

struct InterrogatorTiming {
  int rx_guard_cycles = 1;        // extra listening time after the last echo symbol
  double switch_time = 1e-6;      // s, minimum TX/RX turnaround; ToF must exceed it
};

/// Charge-up long enough for the implant's slow detector path to settle at the
/// mean of the Manchester stream (3/4 of full drive).
std::int64_t config_charge_cycles(double carrier_freq, const DetectorConfig& det = {});

/// Charge-up, "10"x32 preamble, "11001100" header, 96 Manchester payload
/// symbols, an ack window for "0101"+ID and a silent 2 ToF guard.
/// Throws ConfigError for out-of-range params and ScheduleError("half_duplex")
/// when the ack window exceeds the round trip.
PulseDescriptor build_config_pulse(const LinkConfig& params, std::uint8_t target_id, const ChannelConfig& channel,
                                   const InterrogatorTiming& timing = {}, const DetectorConfig& det = {});

/// Charge-up filling the slack, then header (4 + 4-bit count) and data windows.
/// Throws ScheduleError with term "half_duplex" (window longer than the round
/// trip) or "pulse_period" (no room for charge-up).
PulseDescriptor build_uplink_pulse(const FrameSchedule& schedule, const LinkConfig& cfg,
                                   const ChannelConfig& channel, const InterrogatorTiming& timing = {});

/// Cycles of the uplink echo window (header + data, or the ack window).
std::int64_t uplink_window_cycles(const PulseDescriptor& pulse);
/// Cycle offset of the uplink echo window within the pulse.
std::int64_t uplink_window_offset(const PulseDescriptor& pulse);

/// RX gate for a pulse starting (at the transducer) at `pulse_start`. The
/// echo of window cycle 0 arrives after the TX lead-in plus one round trip.
/// Throws ScheduleError("tof") for ToF below the switch time and
/// ScheduleError("rx_gate") when the gate runs into the next pulse.
RxGate rx_gate(const PulseDescriptor& pulse, double pulse_start, double pulse_period,
               const ChannelConfig& channel, const InterrogatorTiming& timing = {});

BitVector manchester_encode_bits(std::span<const std::uint8_t> bits);

/// Ack decision over the 12 sampled echo voltages.
struct AckObservation {
  bool detected = false;
  std::uint8_t id = 0;
  BitVector bits;
  std::vector<double> voltages;
  double separation = 0.0;  // centroid gap over the within-cluster spread
  std::string diagnostic;
};

inline constexpr double kAckMinSeparation = 4.0;

AckObservation decode_ack(std::span<const double> voltages, std::uint8_t expected_id);

/// Something that can fire a Config pulse and report the ack.
class ConfigLink {
 public:
  virtual ~ConfigLink() = default;
  virtual AckObservation send_config(const PulseDescriptor& pulse) = 0;
  virtual const ChannelConfig& channel() const = 0;
};

/// Desk-scale candidates 1..8, or 1..255 for a full sweep.
std::vector<std::uint8_t> candidate_ids(bool full_sweep);

/// One Config pulse per candidate carrying `params`; returns the IDs whose ack decoded.
std::vector<std::uint8_t> discover_implants(ConfigLink& link, std::span<const std::uint8_t> candidates,
                                            const LinkConfig& params);

nlohmann::json describe_pulse(const PulseDescriptor& pulse);

}  // namespace dustnet
