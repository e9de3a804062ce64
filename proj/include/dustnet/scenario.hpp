#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dustnet/afe.hpp"
#include "dustnet/channel.hpp"
#include "dustnet/link_config.hpp"
#include "dustnet/piezo.hpp"
#include "dustnet/pulse.hpp"
#include "json.hpp"

namespace dustnet {

inline constexpr int kScenarioSchemaVersion = 1;

struct ImplantSpec {
  LinkConfig config;
  std::optional<std::filesystem::path> input_signal;  // simulated neural input (DNWF or CSV)
};

struct SimSettings {
  int samples_per_cycle = kDefaultSamplesPerCycle;
  bool record = true;        // write rx.dnwf
  int batch_pulses = 256;    // pulses rendered per parallel batch
  int eye_packets = 64;      // packets traced into eye.csv
};

struct Scenario {
  std::uint64_t seed = 1;
  int duration_frames = 10;
  SimSettings sim;
  ChannelConfig channel;
  double pulse_period = 237.5e-6;
  AfeModel afe;
  std::vector<PiezoModel> piezos;  // empty (defaults), one shared, or one per implant
  std::vector<ImplantSpec> implants;

  int n_implants() const;
  const PiezoModel& piezo_for(std::size_t implant_index) const;
  FrameSchedule frame() const;
  double sim_rate() const { return channel.sim_rate(sim.samples_per_cycle); }

  /// Throws ConfigError on the first violated invariant.
  void validate() const;
};

/// Parses and validates a scenario document; relative input paths resolve
/// against `base_dir`. Unknown keys are rejected.
Scenario parse_scenario(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);

nlohmann::json scenario_to_json(const Scenario& s);

/// Hex FNV-1a digest of the scenario with the seed removed.
std::string config_digest(const Scenario& s);

}  // namespace dustnet
