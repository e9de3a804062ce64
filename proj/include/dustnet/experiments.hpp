#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dustnet/ber.hpp"
#include "dustnet/demod.hpp"
#include "dustnet/scenario.hpp"
#include "dustnet/simulator.hpp"
#include "json.hpp"

namespace dustnet {

struct ImplantReport {
  std::uint8_t implant_id = 0;
  int ask_levels = 16;
  int word_bits = 8;
  BERReport ber;
  double throughput_bps = 0.0;
  std::size_t packets_expected = 0;  // pulses owned by the implant
  std::size_t packets_present = 0;   // packets whose header decoded
  std::size_t words_received = 0;
  std::uint64_t fifo_dropped = 0;
  std::uint64_t clamp_events = 0;
  double header_separation = 0.0;
  std::vector<double> centroids;
  std::vector<double> thresholds;
  std::vector<std::string> diagnostics;
  nlohmann::json snapshot;

  nlohmann::json to_json() const;
};

/// Decoded words of one implant in ADC sample order.
struct DecodedStream {
  std::uint8_t implant_id = 0;
  std::vector<std::uint64_t> sample_index;
  std::vector<std::uint32_t> words;
};

struct RunArtifacts {
  std::uint64_t seed = 0;
  std::string digest;
  std::int64_t frames = 0;
  double duration = 0.0;  // s of uplink
  std::optional<std::filesystem::path> rx_recording;
  std::vector<ImplantReport> reports;
  double aggregate_throughput_bps = 0.0;
  double spectral_efficiency = 0.0;  // kb/s per MHz of carrier
  std::vector<DecodedStream> reconstructed;
  std::vector<ConfigEvent> config_events;
  UplinkResult uplink;

  const ImplantReport& report_for(std::uint8_t implant_id) const;
  /// Summary without the bulky per-pulse data.
  nlohmann::json to_json() const;
};

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;
  bool parallel = true;
  std::optional<std::int64_t> frames;  // overrides duration_frames
};

/// Config Mode for every implant, the ID-0 mode switch, `duration_frames`
/// frames of uplink, offline demodulation and BER. With an output directory,
/// writes rx.dnwf (when recording is on), schedule.json, eye.csv,
/// histogram.csv, streams.csv and report.json.
RunArtifacts run_scenario(const Scenario& scenario, const RunOptions& options = {});

/// Per-implant reports and throughput from a finished uplink.
std::vector<ImplantReport> analyze_uplink(const Simulator& sim, const UplinkResult& uplink,
                                          std::span<const ImplantDecode> decodes);

nlohmann::json schedule_to_json(const UplinkResult& uplink, const Scenario& scenario);

/// Gate and symbol layout of every populated pulse, as written to schedule.json.
struct RecordedSchedule {
  double carrier_freq = 2e6;
  std::vector<ScheduleEntry> entries;
};
RecordedSchedule schedule_from_json(const nlohmann::json& doc);

struct DemodReport {
  std::vector<ImplantDecode> decodes;
  std::vector<BERReport> ber;  // same order as decodes; empty report when not an LFSR stream
  std::size_t segments = 0;
  std::vector<std::string> diagnostics;

  nlohmann::json to_json() const;
};

/// Offline demodulation of a recording against its schedule.
DemodReport demod_recording(const Waveform& recording, const RecordedSchedule& schedule, bool lfsr = true);

void write_eye_csv(const std::filesystem::path& path, const UplinkResult& uplink);
void write_histogram_csv(const std::filesystem::path& path, const UplinkResult& uplink,
                         std::span<const ImplantReport> reports, int bins = 128);

/// Sampled echo voltages of one implant's data symbols grouped by the level
/// actually sent.
struct LevelStatistics {
  int levels = 0;
  std::vector<double> means;
  std::vector<std::size_t> counts;
  double sigma = 0.0;  // pooled within-level standard deviation
};

LevelStatistics level_statistics(const UplinkResult& uplink, std::uint8_t implant_id);

/// Bit error rate predicted from Gaussian errors into the adjacent levels,
/// weighted by the Hamming distance of their natural-binary labels.
double oracle_ber(std::span<const double> means, std::span<const std::size_t> counts, double sigma);
double oracle_ber(const LevelStatistics& stats);

/// One-implant scenario whose depth and pulse period are the smallest that
/// fit the uplink window and carry a full packet per pulse.
Scenario loopback_scenario(int ask_levels, int cycles_per_symbol, int samples_per_packet, std::uint64_t seed);

/// Frames needed for each implant to send at least `min_bits`.
std::int64_t frames_for_bits(const Scenario& scenario, std::uint64_t min_bits);

struct BerPoint {
  int ask_levels = 0;
  double noise_rms = 0.0;
  std::uint8_t implant_id = 0;
  BERReport report;
  LevelStatistics stats;
  double oracle = 0.0;
};

/// One run; BER and oracle for the first implant.
BerPoint measure_ber(const Scenario& scenario, std::int64_t frames, bool parallel = true);

/// Receiver noise that puts the oracle BER of `scenario` at `target_ber`,
/// found from short pilot runs.
double calibrate_noise(const Scenario& scenario, double target_ber, bool parallel = true);

/// Scenario with every implant switched to `ask_levels`; samples per packet
/// is reduced until the uplink window fits the round trip.
Scenario with_ask_levels(const Scenario& base, int ask_levels);

/// One run per (level, noise) pair, each with at least `min_bits` bits per
/// implant. Writes ber.csv when `out_dir` is given.
std::vector<BerPoint> ber_sweep(const Scenario& base, std::span<const int> levels,
                                std::span<const double> noise_levels, std::uint64_t min_bits,
                                const std::optional<std::filesystem::path>& out_dir = {}, bool parallel = true);

void write_ber_csv(const std::filesystem::path& path, std::span<const BerPoint> points);

struct Reconstruction {
  std::uint8_t implant_id = 0;
  std::vector<double> time;       // s after the ADC start
  std::vector<double> decoded;    // input-referred V
  std::vector<double> reference;  // input-referred V
  double nrmse = 0.0;             // RMS error over the reference peak-to-peak
};

/// Decoded words converted back to input-referred voltage and compared with
/// the time-aligned input. Throws ConfigError when the implant has no input signal.
Reconstruction reconstruct_signal(const RunArtifacts& artifacts, const Scenario& scenario, std::uint8_t implant_id);

struct SineFit {
  double amplitude = 0.0;
  double phase = 0.0;
  double offset = 0.0;
  double sndr_db = 0.0;
  double enob = 0.0;
};

/// Least-squares sine of known frequency; everything else counts as noise and distortion.
SineFit sine_fit(std::span<const double> samples, double sample_rate, double freq);

}  // namespace dustnet
