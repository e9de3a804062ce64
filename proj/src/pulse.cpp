#include "dustnet/pulse.hpp"

#include <cmath>

#include "dustnet/errors.hpp"

namespace dustnet {

std::string_view to_string(Section s) noexcept {
  switch (s) {
    case Section::ChargeUp: return "charge-up";
    case Section::Preamble: return "preamble";
    case Section::DownlinkData: return "downlink-data";
    case Section::UplinkWindow: return "uplink";
    case Section::HeaderWindow: return "header";
    case Section::DataWindow: return "data";
  }
  return "?";
}

std::string_view to_string(PulseKind k) noexcept {
  return k == PulseKind::Config ? "config" : "uplink";
}

std::int64_t PulseDescriptor::total_cycles() const noexcept {
  std::int64_t n = 0;
  for (const auto& s : segments) n += s.cycles();
  return n;
}

std::int64_t PulseDescriptor::tx_cycles() const noexcept {
  std::int64_t n = 0, last = 0;
  for (const auto& s : segments) {
    n += s.cycles();
    for (double a : s.amplitudes) {
      if (a != 0.0) {
        last = n;
        break;
      }
    }
  }
  return last;
}

std::int64_t PulseDescriptor::offset_of(std::string_view label) const {
  std::int64_t n = 0;
  for (const auto& s : segments) {
    if (s.label == label) return n;
    n += s.cycles();
  }
  throw ConfigError("pulse has no segment '" + std::string(label) + "'");
}

std::int64_t PulseDescriptor::offset_of(Section section) const {
  std::int64_t n = 0;
  for (const auto& s : segments) {
    if (s.section == section) return n;
    n += s.cycles();
  }
  throw ConfigError("pulse has no section '" + std::string(to_string(section)) + "'");
}

const Segment& PulseDescriptor::segment(std::string_view label) const {
  for (const auto& s : segments) {
    if (s.label == label) return s;
  }
  throw ConfigError("pulse has no segment '" + std::string(label) + "'");
}

bool PulseDescriptor::has_segment(std::string_view label) const noexcept {
  for (const auto& s : segments) {
    if (s.label == label) return true;
  }
  return false;
}

void PulseDescriptor::validate() const {
  if (!(carrier_freq > 0.0)) throw ConfigError("pulse carrier frequency must be positive");
  std::vector<Section> order;
  for (const auto& s : segments) {
    if (s.amplitudes.empty() || s.cycles_per_symbol <= 0) {
      throw ConfigError("pulse segment '" + s.label + "' must have a positive cycle count");
    }
    for (double a : s.amplitudes) {
      if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("pulse amplitudes must lie in [0,1]");
    }
    if (order.empty() || order.back() != s.section) order.push_back(s.section);
  }
  const std::vector<Section> config_order{Section::ChargeUp, Section::Preamble, Section::DownlinkData,
                                          Section::UplinkWindow};
  const std::vector<Section> uplink_order{Section::ChargeUp, Section::HeaderWindow, Section::DataWindow};
  if (kind == PulseKind::Config && order != config_order) {
    throw ConfigError("config pulse must contain charge-up, preamble, downlink data and uplink sections");
  }
  if (kind == PulseKind::Uplink && order != uplink_order) {
    throw ConfigError("uplink pulse must contain charge-up, header and data sections");
  }
}

FrameSchedule FrameSchedule::make(double pulse_period, int pulses_per_frame, double time_of_flight) {
  FrameSchedule s;
  s.pulse_period = pulse_period;
  s.pulses_per_frame = pulses_per_frame;
  s.rx_gate_offset = time_of_flight;
  s.frame_duration = pulse_period * pulses_per_frame;
  s.validate();
  return s;
}

void FrameSchedule::validate() const {
  if (!(pulse_period > 0.0)) throw ConfigError("pulse_period must be positive");
  if (pulses_per_frame < 1 || pulses_per_frame > 8) throw ConfigError("pulses_per_frame must lie in 1..8");
  if (!(rx_gate_offset > 0.0)) throw ConfigError("rx_gate_offset must be positive");
  if (std::abs(frame_duration - pulse_period * pulses_per_frame) > 1e-12 * frame_duration) {
    throw ConfigError("frame_duration must equal pulses_per_frame * pulse_period");
  }
}

}  // namespace dustnet
