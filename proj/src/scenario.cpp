#include "dustnet/scenario.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "dustnet/errors.hpp"

namespace dustnet {
namespace {

using nlohmann::json;

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

ChannelConfig parse_channel(const json& j) {
  check_keys(j, {"depth_m", "sound_speed_m_s", "attenuation_db_cm_mhz", "carrier_hz", "noise_rms",
                 "backscatter_efficiency"},
             "channel");
  ChannelConfig c;
  read(j, "depth_m", c.depth);
  read(j, "sound_speed_m_s", c.sound_speed);
  read(j, "attenuation_db_cm_mhz", c.attenuation);
  read(j, "carrier_hz", c.carrier_freq);
  read(j, "noise_rms", c.noise_rms);
  read(j, "backscatter_efficiency", c.backscatter_efficiency);
  return c;
}

AfeModel parse_afe(const json& j) {
  check_keys(j, {"gain", "full_scale_v", "adc_bits", "sample_rate_hz", "input_noise_rms_v", "chop_hz"}, "afe");
  AfeModel a;
  read(j, "gain", a.gain);
  read(j, "full_scale_v", a.full_scale);
  read(j, "adc_bits", a.adc_bits);
  read(j, "sample_rate_hz", a.sample_rate);
  read(j, "input_noise_rms_v", a.input_noise_rms);
  read(j, "chop_hz", a.chop_freq);
  return a;
}

PiezoModel parse_piezo(const json& j) {
  check_keys(j, {"f_series_hz", "f_parallel_hz", "z_thevenin_series_ohm", "z_thevenin_parallel_ohm", "v_source_v"},
             "piezo");
  PiezoModel p;
  read(j, "f_series_hz", p.f_series);
  read(j, "f_parallel_hz", p.f_parallel);
  read(j, "z_thevenin_series_ohm", p.z_thevenin_series);
  read(j, "z_thevenin_parallel_ohm", p.z_thevenin_parallel);
  read(j, "v_source_v", p.v_source);
  return p;
}

ImplantSpec parse_implant(const json& j, const std::filesystem::path& base) {
  check_keys(j, {"implant_id", "idac_unit_current_a", "samples_per_packet", "ask_levels", "n_implants",
                 "uplink_index", "lfsr_enable", "cycles_per_symbol", "adc_slice", "input_signal"},
             "implant");
  ImplantSpec s;
  auto& c = s.config;
  if (!j.contains("implant_id")) throw ConfigError("implant entry needs implant_id");
  const int id = j.at("implant_id").get<int>();
  if (id < 0 || id > 255) throw ConfigError("implant_id must fit in 8 bits");
  c.implant_id = static_cast<std::uint8_t>(id);
  read(j, "idac_unit_current_a", c.idac_unit_current);
  read(j, "samples_per_packet", c.samples_per_packet);
  read(j, "ask_levels", c.ask_levels);
  read(j, "n_implants", c.n_implants);
  read(j, "uplink_index", c.uplink_index);
  read(j, "lfsr_enable", c.lfsr_enable);
  read(j, "cycles_per_symbol", c.cycles_per_symbol);
  if (j.contains("adc_slice")) c.adc_slice = parse_adc_slice(j.at("adc_slice").get<std::string>());
  if (j.contains("input_signal") && !j.at("input_signal").is_null()) {
    std::filesystem::path p = j.at("input_signal").get<std::string>();
    s.input_signal = p.is_absolute() || base.empty() ? p : base / p;
  }
  return s;
}

}  // namespace

int Scenario::n_implants() const { return implants.empty() ? 1 : implants.front().config.n_implants; }

const PiezoModel& Scenario::piezo_for(std::size_t i) const {
  static const PiezoModel kDefault{};
  if (piezos.empty()) return kDefault;
  if (piezos.size() == 1) return piezos.front();
  return piezos.at(i);
}

FrameSchedule Scenario::frame() const {
  return FrameSchedule::make(pulse_period, n_implants(), channel.time_of_flight());
}

void Scenario::validate() const {
  if (duration_frames < 1) throw ConfigError("duration_frames must be >= 1");
  if (sim.samples_per_cycle < kMinSamplesPerCycle) throw ConfigError("sim.samples_per_cycle must be >= 16");
  if (sim.batch_pulses < 1) throw ConfigError("sim.batch_pulses must be >= 1");
  if (sim.eye_packets < 0) throw ConfigError("sim.eye_packets must be >= 0");
  channel.validate();
  afe.validate();
  if (!(pulse_period > 0.0)) throw ConfigError("frame.pulse_period_s must be positive");
  if (implants.empty()) throw ConfigError("scenario needs at least one implant");
  if (implants.size() > static_cast<std::size_t>(kMaxImplants)) throw ConfigError("at most 8 implants");
  if (!(piezos.empty() || piezos.size() == 1 || piezos.size() == implants.size())) {
    throw ConfigError("piezos must be empty, a single shared entry, or one per implant");
  }
  for (const auto& p : piezos) p.validate();
  std::set<int> ids, slots;
  const int n = implants.front().config.n_implants;
  for (const auto& s : implants) {
    s.config.validate();
    if (!ids.insert(s.config.implant_id).second) throw ConfigError("implant IDs must be unique");
    if (s.config.n_implants != n) throw ConfigError("all implants must share n_implants");
    if (!slots.insert(s.config.uplink_index).second) throw ConfigError("uplink indices must be distinct");
  }
  frame();
}

Scenario parse_scenario(const json& doc, const std::filesystem::path& base_dir) {
  try {
    check_keys(doc, {"schema_version", "seed", "duration_frames", "sim", "channel", "frame", "afe", "piezos",
                     "implants"},
               "scenario");
    if (!doc.contains("schema_version")) throw ConfigError("scenario needs schema_version");
    if (doc.at("schema_version").get<int>() != kScenarioSchemaVersion) {
      throw ConfigError("unsupported schema_version");
    }
    Scenario s;
    read(doc, "seed", s.seed);
    read(doc, "duration_frames", s.duration_frames);
    if (doc.contains("sim")) {
      const auto& j = doc.at("sim");
      check_keys(j, {"samples_per_cycle", "record", "batch_pulses", "eye_packets"}, "sim");
      read(j, "samples_per_cycle", s.sim.samples_per_cycle);
      read(j, "record", s.sim.record);
      read(j, "batch_pulses", s.sim.batch_pulses);
      read(j, "eye_packets", s.sim.eye_packets);
    }
    if (doc.contains("channel")) s.channel = parse_channel(doc.at("channel"));
    if (doc.contains("frame")) {
      check_keys(doc.at("frame"), {"pulse_period_s"}, "frame");
      read(doc.at("frame"), "pulse_period_s", s.pulse_period);
    }
    if (doc.contains("afe")) s.afe = parse_afe(doc.at("afe"));
    if (doc.contains("piezos")) {
      for (const auto& p : doc.at("piezos")) s.piezos.push_back(parse_piezo(p));
    }
    if (!doc.contains("implants")) throw ConfigError("scenario needs implants");
    for (const auto& j : doc.at("implants")) s.implants.push_back(parse_implant(j, base_dir));
    s.channel.rng_seed = s.seed;
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("scenario " + path.string() + ": " + e.what());
  }
  return parse_scenario(doc, path.parent_path());
}

json scenario_to_json(const Scenario& s) {
  json implants = json::array();
  for (const auto& spec : s.implants) {
    const auto& c = spec.config;
    json j = {{"implant_id", c.implant_id},
              {"idac_unit_current_a", c.idac_unit_current},
              {"samples_per_packet", c.samples_per_packet},
              {"ask_levels", c.ask_levels},
              {"n_implants", c.n_implants},
              {"uplink_index", c.uplink_index},
              {"lfsr_enable", c.lfsr_enable},
              {"cycles_per_symbol", c.cycles_per_symbol},
              {"adc_slice", std::string(to_string(c.adc_slice))}};
    if (spec.input_signal) j["input_signal"] = spec.input_signal->generic_string();
    implants.push_back(j);
  }
  json piezos = json::array();
  for (const auto& p : s.piezos) {
    piezos.push_back({{"f_series_hz", p.f_series},
                      {"f_parallel_hz", p.f_parallel},
                      {"z_thevenin_series_ohm", p.z_thevenin_series},
                      {"z_thevenin_parallel_ohm", p.z_thevenin_parallel},
                      {"v_source_v", p.v_source}});
  }
  return {{"schema_version", kScenarioSchemaVersion},
          {"seed", s.seed},
          {"duration_frames", s.duration_frames},
          {"sim",
           {{"samples_per_cycle", s.sim.samples_per_cycle},
            {"record", s.sim.record},
            {"batch_pulses", s.sim.batch_pulses},
            {"eye_packets", s.sim.eye_packets}}},
          {"channel",
           {{"depth_m", s.channel.depth},
            {"sound_speed_m_s", s.channel.sound_speed},
            {"attenuation_db_cm_mhz", s.channel.attenuation},
            {"carrier_hz", s.channel.carrier_freq},
            {"noise_rms", s.channel.noise_rms},
            {"backscatter_efficiency", s.channel.backscatter_efficiency}}},
          {"frame", {{"pulse_period_s", s.pulse_period}}},
          {"afe",
           {{"gain", s.afe.gain},
            {"full_scale_v", s.afe.full_scale},
            {"adc_bits", s.afe.adc_bits},
            {"sample_rate_hz", s.afe.sample_rate},
            {"input_noise_rms_v", s.afe.input_noise_rms},
            {"chop_hz", s.afe.chop_freq}}},
          {"piezos", piezos},
          {"implants", implants}};
}

std::string config_digest(const Scenario& s) {
  json j = scenario_to_json(s);
  j.erase("seed");
  const std::string text = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dustnet
