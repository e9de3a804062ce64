#include "dustnet/interrogator.hpp"

#include <cmath>
#include <numbers>

#include "dustnet/errors.hpp"
#include "dustnet/kmeans.hpp"
#include "dustnet/manchester.hpp"

namespace dustnet {
namespace {

std::int64_t round_trip_cycles(const ChannelConfig& ch) {
  return static_cast<std::int64_t>(std::ceil(2.0 * ch.time_of_flight() * ch.carrier_freq - 1e-9));
}

Segment symbol_segment(Section section, std::string label, const BitVector& symbols, int cps) {
  Segment s{section, std::move(label), {}, cps, symbols};
  s.amplitudes.reserve(symbols.size());
  for (auto b : symbols) s.amplitudes.push_back(b ? kDownlinkHigh : kDownlinkLow);
  return s;
}

Segment tone(Section section, std::string label, std::int64_t cycles, double amplitude) {
  return Segment{section, std::move(label), {amplitude}, static_cast<int>(cycles), {}};
}

}  // namespace

std::int64_t config_charge_cycles(double carrier_freq, const DetectorConfig& det) {
  const double tau = 1.0 / (2.0 * std::numbers::pi * det.slow_corner);
  return static_cast<std::int64_t>(std::ceil(std::log(4.0) * tau * carrier_freq));
}

BitVector manchester_encode_bits(std::span<const std::uint8_t> bits) { return manchester_encode(bits); }

PulseDescriptor build_config_pulse(const LinkConfig& params, std::uint8_t target_id, const ChannelConfig& channel,
                                   const InterrogatorTiming& timing, const DetectorConfig& det) {
  channel.validate();
  const BitVector payload = encode_config_payload(params, target_id);
  const int cps = params.cycles_per_symbol;
  const std::int64_t ack_cycles = static_cast<std::int64_t>(kAckSymbols) * cps;
  if (ack_cycles > round_trip_cycles(channel)) {
    throw ScheduleError("half_duplex", "ack window of " + std::to_string(ack_cycles) +
                                           " cycles exceeds the round trip");
  }
  BitVector preamble;
  for (int i = 0; i < kPreambleSymbols / 2; ++i) {
    preamble.push_back(1);
    preamble.push_back(0);
  }
  const BitVector header(kDownlinkHeader.begin(), kDownlinkHeader.end());

  PulseDescriptor p;
  p.kind = PulseKind::Config;
  p.carrier_freq = channel.carrier_freq;
  p.cycles_per_symbol = cps;
  p.target_id = target_id;
  p.mode_switch = target_id == 0;
  p.segments.push_back(tone(Section::ChargeUp, "charge-up", config_charge_cycles(channel.carrier_freq, det), 1.0));
  p.segments.push_back(symbol_segment(Section::Preamble, "preamble", preamble, cps));
  p.segments.push_back(symbol_segment(Section::DownlinkData, "header", header, cps));
  p.segments.push_back(symbol_segment(Section::DownlinkData, "payload", manchester_encode(payload), cps));
  p.segments.push_back(tone(Section::UplinkWindow, "ack", ack_cycles, 1.0));
  p.segments.push_back(
      tone(Section::UplinkWindow, "guard", round_trip_cycles(channel) + timing.rx_guard_cycles, 0.0));
  p.validate();
  return p;
}

PulseDescriptor build_uplink_pulse(const FrameSchedule& schedule, const LinkConfig& cfg,
                                   const ChannelConfig& channel, const InterrogatorTiming& timing) {
  schedule.validate();
  channel.validate();
  cfg.validate();
  const int cps = cfg.cycles_per_symbol;
  const int header_symbols = static_cast<int>(kUplinkHeader.size()) + kCountFieldBits;
  const std::int64_t header_cycles = static_cast<std::int64_t>(header_symbols) * cps;
  const std::int64_t data_cycles = static_cast<std::int64_t>(cfg.data_symbols()) * cps;
  const std::int64_t window = header_cycles + data_cycles;
  const double rt = 2.0 * channel.time_of_flight() * channel.carrier_freq;
  if (static_cast<double>(window) > rt + 1e-9) {
    throw ScheduleError("half_duplex", "uplink window of " + std::to_string(window) +
                                           " cycles exceeds the round trip of " + std::to_string(rt) + " cycles");
  }
  const double budget = (schedule.pulse_period - 2.0 * channel.time_of_flight()) * channel.carrier_freq -
                        timing.rx_guard_cycles;
  const auto charge = static_cast<std::int64_t>(std::floor(budget + 1e-9)) - window;
  if (charge < 1) {
    throw ScheduleError("pulse_period", "header " + std::to_string(header_cycles) + " + data " +
                                            std::to_string(data_cycles) + " cycles + round trip exceed the pulse period");
  }

  PulseDescriptor p;
  p.kind = PulseKind::Uplink;
  p.carrier_freq = channel.carrier_freq;
  p.cycles_per_symbol = cps;
  p.segments.push_back(tone(Section::ChargeUp, "charge-up", charge, 1.0));
  p.segments.push_back(Segment{Section::HeaderWindow, "header",
                               std::vector<double>(static_cast<std::size_t>(header_symbols), 1.0), cps, {}});
  p.segments.push_back(Segment{Section::DataWindow, "data",
                               std::vector<double>(static_cast<std::size_t>(cfg.data_symbols()), 1.0), cps, {}});
  p.validate();
  return p;
}

std::int64_t uplink_window_offset(const PulseDescriptor& pulse) {
  return pulse.kind == PulseKind::Uplink ? pulse.offset_of(Section::HeaderWindow) : pulse.offset_of("ack");
}

std::int64_t uplink_window_cycles(const PulseDescriptor& pulse) {
  if (pulse.kind == PulseKind::Config) return pulse.segment("ack").cycles();
  return pulse.segment("header").cycles() + pulse.segment("data").cycles();
}

RxGate rx_gate(const PulseDescriptor& pulse, double pulse_start, double pulse_period, const ChannelConfig& channel,
               const InterrogatorTiming& timing) {
  const double tof = channel.time_of_flight();
  if (!(tof > timing.switch_time)) {
    throw ScheduleError("tof", "time of flight must exceed the TX/RX switch time");
  }
  const double f = pulse.carrier_freq;
  RxGate g;
  g.open = pulse_start + static_cast<double>(uplink_window_offset(pulse)) / f + 2.0 * tof;
  g.close = g.open + static_cast<double>(uplink_window_cycles(pulse) + timing.rx_guard_cycles) / f;
  if (g.close > pulse_start + pulse_period + 1e-12) {
    throw ScheduleError("rx_gate", "RX gate closes after the next pulse starts");
  }
  return g;
}

AckObservation decode_ack(std::span<const double> voltages, std::uint8_t expected_id) {
  AckObservation a;
  a.voltages.assign(voltages.begin(), voltages.end());
  if (voltages.size() != static_cast<std::size_t>(kAckSymbols)) {
    a.diagnostic = "expected 12 ack symbols";
    return a;
  }
  const auto c = cluster_thresholds(voltages, 2);
  for (double v : voltages) a.bits.push_back(static_cast<std::uint8_t>(demap_level(v, c.thresholds)));
  double ss = 0.0;
  for (std::size_t i = 0; i < voltages.size(); ++i) {
    const double d = voltages[i] - c.centroids[a.bits[i]];
    ss += d * d;
  }
  const double spread = std::sqrt(ss / static_cast<double>(voltages.size()));
  const double gap = c.centroids[1] - c.centroids[0];
  a.separation = spread > 0.0 ? gap / spread : (gap > 0.0 ? INFINITY : 0.0);
  for (std::size_t i = 0; i < kAckHeader.size(); ++i) {
    if (a.bits[i] != kAckHeader[i]) {
      a.diagnostic = "ack header mismatch";
      return a;
    }
  }
  a.id = static_cast<std::uint8_t>(read_bits(a.bits, kAckHeader.size(), 8));
  if (c.fallback || a.separation < kAckMinSeparation) {
    a.diagnostic = "ack levels not separable";
    return a;
  }
  if (a.id != expected_id) {
    a.diagnostic = "ack ID mismatch";
    return a;
  }
  a.detected = true;
  return a;
}

std::vector<std::uint8_t> candidate_ids(bool full_sweep) {
  std::vector<std::uint8_t> ids;
  const int last = full_sweep ? 255 : kMaxImplants;
  for (int id = 1; id <= last; ++id) ids.push_back(static_cast<std::uint8_t>(id));
  return ids;
}

std::vector<std::uint8_t> discover_implants(ConfigLink& link, std::span<const std::uint8_t> candidates,
                                            const LinkConfig& params) {
  std::vector<std::uint8_t> found;
  for (auto id : candidates) {
    if (id == 0) continue;
    const auto pulse = build_config_pulse(params, id, link.channel());
    if (link.send_config(pulse).detected) found.push_back(id);
  }
  return found;
}

nlohmann::json describe_pulse(const PulseDescriptor& pulse) {
  nlohmann::json segs = nlohmann::json::array();
  std::int64_t offset = 0;
  for (const auto& s : pulse.segments) {
    segs.push_back({{"label", s.label},
                    {"section", std::string(to_string(s.section))},
                    {"offset_cycles", offset},
                    {"cycles", s.cycles()},
                    {"cycles_per_symbol", s.cycles_per_symbol},
                    {"symbols", s.amplitudes.size()}});
    offset += s.cycles();
  }
  return {{"kind", std::string(to_string(pulse.kind))},
          {"carrier_hz", pulse.carrier_freq},
          {"target_id", pulse.target_id},
          {"mode_switch", pulse.mode_switch},
          {"total_cycles", pulse.total_cycles()},
          {"segments", segs}};
}

}  // namespace dustnet
