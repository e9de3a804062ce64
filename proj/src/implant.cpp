#include "dustnet/implant.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "dustnet/errors.hpp"
#include "dustnet/lfsr.hpp"
#include "dustnet/manchester.hpp"

namespace dustnet {

std::string_view to_string(ImplantMode m) noexcept {
  return m == ImplantMode::ConfigMode ? "ConfigMode" : "UplinkMode";
}

std::string_view to_string(DownlinkStatus s) noexcept {
  switch (s) {
    case DownlinkStatus::Decoded: return "decoded";
    case DownlinkStatus::NoLock: return "no_lock";
    case DownlinkStatus::BadHeader: return "bad_header";
    case DownlinkStatus::CodingViolation: return "coding_violation";
    case DownlinkStatus::BadPayload: return "bad_payload";
  }
  return "?";
}

std::string_view to_string(ConfigAction a) noexcept {
  switch (a) {
    case ConfigAction::Ignored: return "ignored";
    case ConfigAction::Applied: return "applied";
    case ConfigAction::ModeSwitch: return "mode_switch";
    case ConfigAction::Rejected: return "rejected";
  }
  return "?";
}

void WordFifo::push(FifoWord w) {
  if (capacity_ == 0) {
    ++dropped_;
    return;
  }
  if (words_.size() == capacity_) {
    words_.pop_front();
    ++dropped_;
  }
  words_.push_back(w);
}

FifoWord WordFifo::pop() {
  if (words_.empty()) throw std::logic_error("pop from empty FIFO");
  const FifoWord w = words_.front();
  words_.pop_front();
  return w;
}

std::uint8_t detect_envelope_symbol(double env_fast, double env_avg) noexcept {
  return env_fast > env_avg ? 1 : 0;
}

int estimate_symbol_width(std::span<const std::int64_t> intervals) {
  if (intervals.empty()) throw PreambleLockError("fewer than 2 preamble transitions");
  const double sum = static_cast<double>(std::accumulate(intervals.begin(), intervals.end(), std::int64_t{0}));
  return static_cast<int>(std::lround(sum / static_cast<double>(intervals.size())));
}

BitVector envelope_decisions(const Waveform& incident, double origin, double carrier_freq,
                             const DetectorConfig& det) {
  BitVector out;
  if (incident.empty()) return out;
  const double dt = incident.dt();
  const double a_fast = 1.0 - std::exp(-dt * 2.0 * std::numbers::pi * det.fast_corner);
  const double a_slow = 1.0 - std::exp(-dt * 2.0 * std::numbers::pi * det.slow_corner);
  double fast = 0.0, slow = 0.0;
  std::int64_t cycle = -1;
  for (std::size_t i = 0; i < incident.size(); ++i) {
    const double rel = (incident.time_at(i) - origin) * carrier_freq;
    if (rel < -1e-9) continue;
    const auto c = static_cast<std::int64_t>(std::floor(rel + 1e-9));
    if (cycle >= 0 && c != cycle) {
      for (std::int64_t k = cycle; k < c; ++k) out.push_back(detect_envelope_symbol(fast, slow));
    }
    cycle = c;
    const double x = std::abs(incident.samples[i]);
    fast += a_fast * (x - fast);
    slow += a_slow * (x - slow);
  }
  if (cycle >= 0) out.push_back(detect_envelope_symbol(fast, slow));
  return out;
}

DownlinkFrame decode_downlink(std::span<const std::uint8_t> d, const DetectorConfig& det) {
  DownlinkFrame f;
  std::vector<std::int64_t> transitions;
  for (std::size_t i = 1; i < d.size(); ++i) {
    if (d[i] != d[i - 1]) transitions.push_back(static_cast<std::int64_t>(i));
  }
  if (transitions.size() < 2) {
    f.diagnostic = "fewer than 2 preamble transitions";
    return f;
  }
  std::vector<std::int64_t> intervals;
  std::size_t k = 1;
  bool found = false;
  double sum = static_cast<double>(transitions[1] - transitions[0]);
  intervals.push_back(transitions[1] - transitions[0]);
  for (k = 1; k + 1 < transitions.size(); ++k) {
    const auto iv = transitions[k + 1] - transitions[k];
    const double mean = sum / static_cast<double>(intervals.size());
    if (static_cast<double>(iv) >= det.break_ratio * mean) {
      found = true;
      break;
    }
    intervals.push_back(iv);
    sum += static_cast<double>(iv);
  }
  if (!found) {
    f.diagnostic = "preamble never ended";
    return f;
  }
  const int w = estimate_symbol_width(intervals);
  if (w < 1) {
    f.diagnostic = "symbol width below one cycle";
    return f;
  }
  f.symbol_width = w;
  f.header_start = transitions[k];

  auto sample = [&](std::int64_t symbol) -> int {
    const std::int64_t idx = f.header_start + symbol * w + w / 2;
    if (idx < 0 || idx >= static_cast<std::int64_t>(d.size())) return -1;
    return d[static_cast<std::size_t>(idx)];
  };
  for (std::size_t j = 0; j < kDownlinkHeader.size(); ++j) {
    if (sample(static_cast<std::int64_t>(j)) != kDownlinkHeader[j]) {
      f.status = DownlinkStatus::BadHeader;
      f.diagnostic = "header mismatch at symbol " + std::to_string(j);
      return f;
    }
  }
  const auto hdr = static_cast<std::int64_t>(kDownlinkHeader.size());
  for (std::int64_t j = 0; j < 2 * kConfigPayloadBits; ++j) {
    const int s = sample(hdr + j);
    if (s < 0) {
      f.status = DownlinkStatus::BadHeader;
      f.diagnostic = "pulse ended inside the payload";
      return f;
    }
    f.symbols.push_back(static_cast<std::uint8_t>(s));
  }
  try {
    f.payload = manchester_decode(f.symbols);
  } catch (const ManchesterViolation& e) {
    f.status = DownlinkStatus::CodingViolation;
    f.diagnostic = e.what();
    return f;
  }
  f.status = DownlinkStatus::Decoded;
  return f;
}

ConfigResult apply_config(ImplantState& state, std::span<const std::uint8_t> payload) {
  ConfigResult r;
  ConfigPayload p;
  try {
    p = decode_config_payload(payload);
  } catch (const ConfigError& e) {
    r.action = ConfigAction::Rejected;
    r.diagnostic = e.what();
    return r;
  }
  if (p.target_id == 0) {
    state.mode = ImplantMode::UplinkMode;
    state.pulse_count = 0;
    r.action = ConfigAction::ModeSwitch;
    return r;
  }
  if (p.target_id != state.config.implant_id) return r;

  LinkConfig next = p.registers;
  next.implant_id = state.config.implant_id;
  const LinkConfig& cur = state.config;
  if (next.ask_levels != cur.ask_levels || next.adc_slice != cur.adc_slice || next.lfsr_enable != cur.lfsr_enable) {
    state.fifo.clear();
  }
  state.config = next;
  r.action = ConfigAction::Applied;
  r.ack = true;
  return r;
}

bool should_transmit(const ImplantState& s) noexcept {
  if (s.mode != ImplantMode::UplinkMode || s.config.n_implants < 1) return false;
  const auto n = static_cast<std::uint64_t>(s.config.n_implants);
  return static_cast<int>(s.pulse_count % n) + 1 == s.config.uplink_index;
}

std::uint8_t level_to_code(int level, int bits_per_symbol) noexcept {
  const int top = (1 << bits_per_symbol) - 1;
  return static_cast<std::uint8_t>(std::lround(static_cast<double>(level) * kMaxIdacCode / top));
}

UplinkPacket assemble_uplink_packet(ImplantState& state) {
  UplinkPacket pkt;
  const auto& cfg = state.config;
  const int n = static_cast<int>(std::min<std::size_t>(state.fifo.size(), static_cast<std::size_t>(cfg.samples_per_packet)));
  if (n == 0) return pkt;
  pkt.count = n;
  for (auto b : kUplinkHeader) pkt.codes.push_back(b ? kMaxIdacCode : 0);
  for (auto b : to_bits(static_cast<std::uint64_t>(n - 1), kCountFieldBits)) pkt.codes.push_back(b ? kMaxIdacCode : 0);
  const int m = cfg.bits_per_symbol();
  const int wb = cfg.word_bits();
  for (int i = 0; i < n; ++i) {
    const FifoWord w = state.fifo.pop();
    pkt.words.push_back(w);
    for (int g = wb / m - 1; g >= 0; --g) {
      const int level = static_cast<int>((w.value >> (g * m)) & ((1U << m) - 1U));
      pkt.codes.push_back(level_to_code(level, m));
    }
  }
  return pkt;
}

std::vector<std::uint8_t> ack_codes(std::uint8_t implant_id) {
  std::vector<std::uint8_t> codes;
  for (auto b : kAckHeader) codes.push_back(b ? kMaxIdacCode : 0);
  for (auto b : to_bits(implant_id, 8)) codes.push_back(b ? kMaxIdacCode : 0);
  return codes;
}

GammaTrace codes_to_trace(std::span<const std::uint8_t> codes, const PiezoModel& piezo, double unit_current,
                          double origin, double carrier_freq, std::int64_t first_cycle, int cycles_per_symbol,
                          std::uint64_t* clamped) {
  GammaTrace t{origin, carrier_freq, {}};
  t.steps.reserve(codes.size() + 1);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const auto g = gamma_from_idac(piezo, IdacSetting{unit_current, codes[i]});
    if (g.clamped && clamped) ++*clamped;
    t.steps.push_back({first_cycle + static_cast<std::int64_t>(i) * cycles_per_symbol, g.gamma});
  }
  t.steps.push_back({first_cycle + static_cast<std::int64_t>(codes.size()) * cycles_per_symbol, 0.0});
  return t;
}

Implant::Implant(const LinkConfig& config, const PiezoModel& piezo, const AfeModel& afe, std::uint64_t root_seed,
                 std::size_t fifo_capacity, DetectorConfig detector)
    : piezo_(piezo), afe_(afe), detector_(detector), afe_rng_(make_rng(root_seed, Stream::AfeNoise, config.implant_id)) {
  config.validate();
  piezo.validate();
  afe.validate();
  state_.config = config;
  state_.fifo = WordFifo(fifo_capacity);
  state_.lfsr_state = lfsr_seed_for(config.implant_id);
}

ConfigReception Implant::receive_config(const Waveform& incident, double origin, double carrier_freq) {
  ConfigReception rx;
  if (state_.mode != ImplantMode::ConfigMode) {
    rx.result.diagnostic = "not in Config Mode";
    return rx;
  }
  const auto decisions = envelope_decisions(incident, origin, carrier_freq, detector_);
  rx.frame = decode_downlink(decisions, detector_);
  if (rx.frame.status == DownlinkStatus::CodingViolation) {
    rx.result.action = ConfigAction::Rejected;
    rx.result.diagnostic = rx.frame.diagnostic;
    return rx;
  }
  if (rx.frame.status != DownlinkStatus::Decoded) {
    rx.result.diagnostic = rx.frame.diagnostic;
    return rx;
  }
  const int w = rx.frame.symbol_width;
  state_.estimated_symbol_width = w;
  rx.result = apply_config(state_, rx.frame.payload);
  if (rx.result.action == ConfigAction::Rejected) rx.frame.status = DownlinkStatus::BadPayload;

  const auto hdr = static_cast<std::int64_t>(kDownlinkHeader.size());
  const std::int64_t payload_end = rx.frame.header_start + (hdr + 2 * kConfigPayloadBits) * w;
  if (rx.result.action == ConfigAction::ModeSwitch) {
    enter_uplink(origin + static_cast<double>(payload_end) / carrier_freq);
  }
  if (rx.result.ack) {
    const auto codes = ack_codes(id());
    // The comparator delay shifts both preamble edges equally, so the header
    // position (and payload end) is already on the interrogator's cycle grid.
    rx.ack = codes_to_trace(codes, piezo_, state_.config.idac_unit_current, origin, carrier_freq, payload_end, w,
                            &clamp_events_);
  }
  return rx;
}

void Implant::enter_uplink(double t) {
  state_.mode = ImplantMode::UplinkMode;
  state_.pulse_count = 0;
  state_.fifo.clear();
  state_.lfsr_state = lfsr_seed_for(id());
  adc_start_ = t;
  next_sample_ = 0;
}

std::uint32_t Implant::next_word() {
  const auto& cfg = state_.config;
  if (cfg.lfsr_enable) {
    std::uint32_t w = 0;
    for (int i = 0; i < cfg.word_bits(); ++i) {
      const auto step = lfsr_step(state_.lfsr_state);
      state_.lfsr_state = step.state;
      w = (w << 1) | step.bit;
    }
    return w;
  }
  const double v = next_sample_ < input_.size() ? input_[next_sample_] : 0.0;
  return slice_bits(afe_sample(v, afe_, afe_rng_), cfg);
}

void Implant::produce_until(double t) {
  if (state_.mode != ImplantMode::UplinkMode) return;
  while (adc_start_ + static_cast<double>(next_sample_) / afe_.sample_rate <= t) {
    state_.fifo.push({next_word(), next_sample_});
    ++next_sample_;
  }
}

std::optional<UplinkPacket> Implant::on_uplink_pulse(double data_time) {
  if (state_.mode != ImplantMode::UplinkMode) return std::nullopt;
  produce_until(data_time);
  std::optional<UplinkPacket> pkt;
  if (should_transmit(state_)) pkt = assemble_uplink_packet(state_);
  ++state_.pulse_count;
  return pkt;
}

nlohmann::json Implant::snapshot() const {
  const auto& c = state_.config;
  return {
      {"implant_id", c.implant_id},
      {"mode", std::string(to_string(state_.mode))},
      {"pulse_count", state_.pulse_count},
      {"estimated_symbol_width", state_.estimated_symbol_width},
      {"fifo_depth", state_.fifo.size()},
      {"fifo_capacity", state_.fifo.capacity()},
      {"fifo_dropped", state_.fifo.dropped()},
      {"lfsr_state", state_.lfsr_state},
      {"clamp_events", clamp_events_},
      {"registers",
       {{"idac_unit_current_a", c.idac_unit_current},
        {"samples_per_packet", c.samples_per_packet},
        {"ask_levels", c.ask_levels},
        {"n_implants", c.n_implants},
        {"uplink_index", c.uplink_index},
        {"lfsr_enable", c.lfsr_enable},
        {"cycles_per_symbol", c.cycles_per_symbol},
        {"adc_slice", std::string(to_string(c.adc_slice))}}},
  };
}

}  // namespace dustnet
