#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dustnet/channel.hpp"
#include "dustnet/demod.hpp"
#include "dustnet/dnwf.hpp"
#include "dustnet/implant.hpp"
#include "dustnet/interrogator.hpp"
#include "dustnet/scenario.hpp"

namespace dustnet {

struct Transmission {
  std::size_t implant_index = 0;
  std::uint8_t implant_id = 0;
  UplinkPacket packet;
  GammaTrace trace;
};

/// Protocol-level view of one uplink pulse, before any waveform exists.
struct PlannedPulse {
  std::int64_t pulse_index = 0;  // counted from the mode switch
  std::int64_t frame = 0;
  int slot = 0;
  double start = 0.0;            // TX start at the transducer, s
  std::optional<std::size_t> owner;  // implant configured for this slot
  std::uint8_t owner_id = 0;
  const PulseDescriptor* descriptor = nullptr;
  RxGate gate;
  std::size_t symbols = 0;       // header + count + full data window
  std::vector<Transmission> transmissions;  // implants that backscatter on this pulse
};

struct KernelContext {
  ChannelConfig channel;
  double sim_rate = 128e6;
  DemodConfig demod;
  std::uint64_t root_seed = 1;
  bool keep_samples = false;  // return the gated RX samples for recording
};

struct PulseObservation {
  std::int64_t pulse_index = 0;
  std::vector<double> voltages;
  std::int64_t rx_offset = 0;       // global grid index of the first gated sample
  std::vector<double> rx_samples;   // only with keep_samples
  std::vector<double> eye;          // 8 differential-envelope points per symbol when requested
  bool envelope_fallback = false;
};

inline constexpr int kEyePointsPerSymbol = 8;

/// Synthesizes TX, propagates to the implant, backscatters, propagates back,
/// gates, adds receiver noise and runs the demodulation chain. Pure: the
/// result depends only on the arguments.
PulseObservation render_and_demod(const PlannedPulse& pulse, const KernelContext& ctx, bool want_eye);

/// Reference implementation, one pulse after another.
std::vector<PulseObservation> render_batch_serial(std::span<const PlannedPulse> pulses, const KernelContext& ctx,
                                                  std::int64_t eye_below_index = 0);
/// OpenMP version; identical output to render_batch_serial.
std::vector<PulseObservation> render_batch_parallel(std::span<const PlannedPulse> pulses, const KernelContext& ctx,
                                                    std::int64_t eye_below_index = 0);

struct ConfigEvent {
  std::uint8_t target_id = 0;
  double start = 0.0;
  AckObservation ack;
  std::vector<std::pair<std::uint8_t, ConfigAction>> actions;
};

struct ScheduleEntry {
  std::int64_t pulse_index = 0;
  std::int64_t frame = 0;
  int slot = 0;
  double start = 0.0;
  RxGate gate;
  std::uint8_t implant_id = 0;  // 0: empty slot, no gate
  double symbol_start = 0.0;
  double symbol_duration = 0.0;
  int header_symbols = 0;
  int max_data_symbols = 0;
  int ask_levels = 0;
  int word_bits = 0;
  int max_words = 0;
  std::uint16_t lfsr_seed = 0;
};

struct PacketTruth {
  std::int64_t pulse_index = 0;
  std::uint8_t implant_id = 0;
  std::vector<std::uint8_t> codes;
  std::vector<FifoWord> words;
};

struct EyeTrace {
  std::int64_t pulse_index = 0;
  std::uint8_t implant_id = 0;
  int ask_levels = 16;
  double symbol_duration = 0.0;
  std::vector<std::uint8_t> codes;
  std::vector<double> points;
};

struct UplinkResult {
  std::int64_t frames = 0;
  double start_time = 0.0;
  double duration = 0.0;
  std::vector<ScheduleEntry> schedule;
  std::vector<PacketObservation> observations;
  std::vector<PacketTruth> truth;
  std::vector<EyeTrace> eyes;
  std::uint64_t exclusivity_violations = 0;  // populated pulses without exactly one transmitter
  std::uint64_t envelope_fallbacks = 0;
};

/// Time-ordered protocol engine: one interrogator, a population of implants
/// and a single acoustic path. Pulses are planned sequentially; waveform
/// rendering and demodulation run in batches.
class Simulator : public ConfigLink {
 public:
  explicit Simulator(const Scenario& scenario, bool parallel = true);

  const Scenario& scenario() const noexcept { return scenario_; }
  std::vector<Implant>& implants() noexcept { return implants_; }
  const std::vector<Implant>& implants() const noexcept { return implants_; }
  const ChannelConfig& channel() const override { return scenario_.channel; }
  double now() const noexcept { return clock_; }
  double uplink_start() const noexcept { return uplink_start_; }
  const std::vector<ConfigEvent>& config_log() const noexcept { return config_log_; }

  AckObservation send_config(const PulseDescriptor& pulse) override;

  /// Config pulse per implant (its own registers, its own ID) followed by the
  /// ID-0 mode switch. Returns the events in order.
  std::vector<ConfigEvent> configure();

  /// Advances the protocol by `count` uplink pulses without rendering.
  std::vector<PlannedPulse> plan_pulses(std::int64_t count);

  /// Plans, renders and demodulates `frames` frames. With a recorder, the
  /// gated RX samples are streamed into it (sample 0 at uplink_start()).
  /// A ScheduleError raised mid-run is rethrown with the frame index.
  UplinkResult run_uplink(std::int64_t frames, DnwfWriter* recorder = nullptr);

  /// Uplink descriptor for implant `index` (built from its scenario registers).
  const PulseDescriptor& uplink_descriptor(std::size_t index) const { return uplink_pulses_.at(index); }

 private:
  KernelContext kernel_context(bool keep_samples) const;

  Scenario scenario_;
  bool parallel_;
  FrameSchedule frame_;
  std::vector<Implant> implants_;
  std::vector<PulseDescriptor> uplink_pulses_;
  std::vector<std::optional<std::size_t>> slot_owner_;
  std::vector<ConfigEvent> config_log_;
  double clock_ = 0.0;
  double uplink_start_ = 0.0;
  std::int64_t next_pulse_ = 0;
  std::uint64_t config_pulses_ = 0;
};

}  // namespace dustnet
