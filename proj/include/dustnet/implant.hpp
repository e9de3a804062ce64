#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dustnet/afe.hpp"
#include "dustnet/bits.hpp"
#include "dustnet/channel.hpp"
#include "dustnet/link_config.hpp"
#include "dustnet/piezo.hpp"
#include "dustnet/rng.hpp"
#include "dustnet/waveform.hpp"
#include "json.hpp"

namespace dustnet {

enum class ImplantMode { ConfigMode, UplinkMode };
std::string_view to_string(ImplantMode m) noexcept;

inline constexpr std::array<std::uint8_t, 8> kDownlinkHeader{1, 1, 0, 0, 1, 1, 0, 0};
inline constexpr std::array<std::uint8_t, 4> kUplinkHeader{1, 0, 1, 0};
inline constexpr std::array<std::uint8_t, 4> kAckHeader{0, 1, 0, 1};
inline constexpr int kPreambleSymbols = 64;
inline constexpr int kCountFieldBits = 4;
inline constexpr int kAckSymbols = 12;  // "0101" + 8-bit ID
inline constexpr std::uint8_t kMaxIdacCode = 15;

struct FifoWord {
  std::uint32_t value = 0;
  std::uint64_t sample_index = 0;  // ADC sample that produced the word
};

/// Bounded word queue. A push into a full queue drops the oldest word, so
/// the delivered stream stays contiguous between drops.
class WordFifo {
 public:
  explicit WordFifo(std::size_t capacity = 16) : capacity_(capacity) {}

  void push(FifoWord w);
  FifoWord pop();
  bool empty() const noexcept { return words_.empty(); }
  std::size_t size() const noexcept { return words_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  std::uint64_t dropped() const noexcept { return dropped_; }
  void clear() noexcept { words_.clear(); }

 private:
  std::size_t capacity_;
  std::deque<FifoWord> words_;
  std::uint64_t dropped_ = 0;
};

struct ImplantState {
  ImplantMode mode = ImplantMode::ConfigMode;
  std::uint64_t pulse_count = 0;
  int estimated_symbol_width = 0;  // cycles, 0 until a preamble lock
  WordFifo fifo;
  std::uint16_t lfsr_state = 1;
  LinkConfig config;
};

/// Fewer than two preamble transitions.
class PreambleLockError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Implant-side downlink detector: rectifier followed by a fast and a slow
/// one-pole low-pass; the comparator fires once per carrier cycle.
struct DetectorConfig {
  double fast_corner = 200e3;  // Hz
  double slow_corner = 2e3;    // Hz
  double break_ratio = 1.5;    // preamble ends at the first interval this much longer than the mean
};

std::uint8_t detect_envelope_symbol(double env_fast, double env_avg) noexcept;

/// Mean preamble interval rounded to whole cycles. Throws PreambleLockError
/// for an empty interval list.
int estimate_symbol_width(std::span<const std::int64_t> intervals);

/// One comparator decision per carrier cycle, cycle 0 starting at `origin`.
BitVector envelope_decisions(const Waveform& incident, double origin, double carrier_freq,
                             const DetectorConfig& det = {});

enum class DownlinkStatus { Decoded, NoLock, BadHeader, CodingViolation, BadPayload };
std::string_view to_string(DownlinkStatus s) noexcept;

struct DownlinkFrame {
  DownlinkStatus status = DownlinkStatus::NoLock;
  int symbol_width = 0;
  std::int64_t header_start = 0;  // decision index where the header begins
  BitVector symbols;              // 96 on-air payload symbols
  BitVector payload;              // 48 decoded bits
  std::string diagnostic;
};

/// Preamble lock, header check, payload sampling and Manchester decoding.
DownlinkFrame decode_downlink(std::span<const std::uint8_t> decisions, const DetectorConfig& det = {});

enum class ConfigAction { Ignored, Applied, ModeSwitch, Rejected };
std::string_view to_string(ConfigAction a) noexcept;

struct ConfigResult {
  ConfigAction action = ConfigAction::Ignored;
  bool ack = false;
  std::string diagnostic;
};

/// Register update / mode switch for a decoded 48-bit payload. Changing a
/// data-path register flushes the FIFO.
ConfigResult apply_config(ImplantState& state, std::span<const std::uint8_t> payload);

/// (pulse_count mod n_implants) + 1 == uplink_index, in Uplink Mode only.
bool should_transmit(const ImplantState& state) noexcept;

/// Data symbol value -> I-DAC code, spreading 2^M levels over 0..15.
std::uint8_t level_to_code(int level, int bits_per_symbol) noexcept;

struct UplinkPacket {
  std::vector<std::uint8_t> codes;  // header, count field, data
  std::vector<FifoWord> words;
  int count = 0;                    // 0 when the FIFO was empty (implant stays silent)
};

/// Drains up to samples_per_packet words and emits the code sequence.
UplinkPacket assemble_uplink_packet(ImplantState& state);

/// "0101" + 8-bit ID as 2-level codes.
std::vector<std::uint8_t> ack_codes(std::uint8_t implant_id);

/// Piecewise-constant Gamma for a code sequence starting at `first_cycle`,
/// returning to 0 after the last symbol. Counts clamped codes into `clamped`.
GammaTrace codes_to_trace(std::span<const std::uint8_t> codes, const PiezoModel& piezo,
                          double unit_current, double origin, double carrier_freq,
                          std::int64_t first_cycle, int cycles_per_symbol,
                          std::uint64_t* clamped = nullptr);

struct ConfigReception {
  DownlinkFrame frame;
  ConfigResult result;
  std::optional<GammaTrace> ack;
};

/// One DustNet node.
class Implant {
 public:
  Implant(const LinkConfig& config, const PiezoModel& piezo, const AfeModel& afe, std::uint64_t root_seed,
          std::size_t fifo_capacity = 16, DetectorConfig detector = {});

  std::uint8_t id() const noexcept { return state_.config.implant_id; }
  const ImplantState& state() const noexcept { return state_; }
  ImplantState& state() noexcept { return state_; }
  const PiezoModel& piezo() const noexcept { return piezo_; }
  const AfeModel& afe() const noexcept { return afe_; }

  /// Neural input at the AFE sample rate, sample 0 at the start of Uplink Mode.
  void set_input(std::vector<double> samples) { input_ = std::move(samples); }

  /// Incident Config pulse with carrier cycle 0 arriving at `origin`.
  ConfigReception receive_config(const Waveform& incident, double origin, double carrier_freq);

  /// Clocks the data source for every ADC sample instant <= t.
  void produce_until(double t);

  /// One US-On event in Uplink Mode. `data_time` is when the FIFO is read.
  std::optional<UplinkPacket> on_uplink_pulse(double data_time);

  std::uint64_t clamp_events() const noexcept { return clamp_events_; }
  void count_clamps(std::uint64_t n) noexcept { clamp_events_ += n; }
  std::uint64_t samples_produced() const noexcept { return next_sample_; }

  /// Mode, registers, pulse count and FIFO depth.
  nlohmann::json snapshot() const;

 private:
  void enter_uplink(double t);
  std::uint32_t next_word();

  ImplantState state_;
  PiezoModel piezo_;
  AfeModel afe_;
  DetectorConfig detector_;
  Rng afe_rng_;
  std::vector<double> input_;
  double adc_start_ = 0.0;
  std::uint64_t next_sample_ = 0;
  std::uint64_t clamp_events_ = 0;
};

}  // namespace dustnet
