#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dustnet/bits.hpp"
#include "dustnet/envelope.hpp"
#include "dustnet/iir.hpp"
#include "dustnet/kmeans.hpp"
#include "dustnet/link_config.hpp"
#include "dustnet/pulse.hpp"
#include "dustnet/waveform.hpp"

namespace dustnet {

struct DemodConfig {
  double carrier_freq = 2e6;
  double hpf_corner = 20e3;
  int hpf_order = 4;
  double lpf_stop_edge = 10e6;
  int lpf_order = 2;
  double lpf_atten_db = 40.0;
  double settle_guard_cycles = 1.0;
};

struct EnvelopeTrace {
  Waveform positive;
  Waveform negative;
  Waveform differential;
  bool fallback = false;
  std::string diagnostic;
};

struct SymbolFrame {
  std::vector<double> echo_voltages;
  std::vector<double> symbol_times;  // sampling instants, s
  std::int64_t source_pulse_index = 0;
  int implant_slot = 0;
};

/// Uniform symbol grid: symbol k spans [start + k*duration, start + (k+1)*duration).
struct SymbolSchedule {
  double first_symbol_start = 0.0;
  double symbol_duration = 0.0;
  std::size_t count = 0;
  double settle_guard = 0.0;  // sample at symbol end minus this
};

struct PulseSegment {
  std::int64_t index = 0;  // gate index
  RxGate gate;
  Waveform samples;
};

/// Cuts one segment per gate fully covered by the recording. Gates that run
/// past the end are dropped; when no gate holds any energy the result is
/// empty and `diagnostic` says why.
std::vector<PulseSegment> segment_pulses(const Waveform& recording, std::span<const RxGate> gates,
                                         std::string* diagnostic = nullptr);

/// Gates at first_open + k * pulse_period for every pulse of the recording.
std::vector<PulseSegment> segment_pulses(const Waveform& recording, const FrameSchedule& schedule, double first_open,
                                         double gate_duration, std::string* diagnostic = nullptr);

/// Zero-phase Butterworth high-pass. Throws ConfigError when the corner is at or above Nyquist.
Waveform highpass(const Waveform& segment, const DemodConfig& cfg = {});

/// Zero-phase Type 2 Chebyshev low-pass. Throws ConfigError when the stopband edge is at or above Nyquist.
Waveform lowpass_envelope(const Waveform& envelope, const DemodConfig& cfg = {});

/// pos - neg. Throws ConfigError when the traces are not aligned.
Waveform combine_differential(const Waveform& pos, const Waveform& neg);

/// Linear interpolation of `env` at each symbol end minus the guard. Throws
/// DomainError naming the first symbol whose instant falls outside the trace.
SymbolFrame sample_symbols(const Waveform& env, const SymbolSchedule& schedule);

/// High-pass, envelope, low-pass, differential.
EnvelopeTrace demodulate_envelope(const Waveform& segment, const DemodConfig& cfg = {});

/// Full chain down to one voltage per scheduled symbol.
SymbolFrame demodulate_segment(const Waveform& segment, const DemodConfig& cfg, const SymbolSchedule& schedule);

std::vector<int> demap_levels(std::span<const double> voltages, std::span<const double> thresholds);
BitVector levels_to_bits(std::span<const int> levels, int bits_per_symbol);
/// Groups bits MSB first into words; a trailing partial word is dropped.
std::vector<std::uint32_t> bits_to_words(std::span<const std::uint8_t> bits, int word_bits);
BitVector words_to_bits(std::span<const std::uint32_t> words, int word_bits);

/// Level decisions and natural-binary demapping of a frame.
BitVector demap(const SymbolFrame& frame, std::span<const double> thresholds, const LinkConfig& cfg);

/// Echo voltages of one uplink pulse (header, count field, data window).
struct PacketObservation {
  std::int64_t pulse_index = 0;
  std::uint8_t implant_id = 0;
  int ask_levels = 16;
  int word_bits = 8;
  int max_words = 0;
  std::vector<double> voltages;
};

struct DecodedPacket {
  std::int64_t pulse_index = 0;
  bool present = false;
  int header_errors = 0;
  int count = 0;
  std::vector<int> levels;
  std::vector<std::uint32_t> words;
};

struct ImplantDecode {
  std::uint8_t implant_id = 0;
  ClusterResult header_clusters;
  ClusterResult data_clusters;
  double header_separation = 0.0;
  std::vector<DecodedPacket> packets;
  std::vector<std::string> diagnostics;

  std::size_t words_received() const noexcept;
};

/// Header centroid gap over the within-cluster RMS below which the implant is
/// treated as silent. Pure Gaussian noise split in two scores about 2.65.
inline constexpr double kHeaderMinSeparation = 3.0;
/// Smallest accepted gap between data centroids, as a fraction of the header
/// span divided by (levels - 1). Below it the data does not use every level
/// and the decoder falls back to the code grid between the header levels.
inline constexpr double kMinLevelStepFraction = 0.25;

/// Offline decoding: per-implant pooled 2-level thresholds for the header and
/// count field, presence by header match (at most one symbol error), then
/// per-implant pooled k-means over the data symbols. Output ordered by implant ID.
std::vector<ImplantDecode> decode_uplink(std::span<const PacketObservation> observations);

}  // namespace dustnet
