#include "dustnet/experiments.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <numeric>

#include "dustnet/afe.hpp"
#include "dustnet/errors.hpp"
#include "dustnet/lfsr.hpp"
#include "dustnet/signal_io.hpp"

namespace dustnet {
namespace fs = std::filesystem;
namespace {

constexpr int kHeaderSymbols = static_cast<int>(kUplinkHeader.size()) + kCountFieldBits;

using TruthKey = std::pair<std::int64_t, std::uint8_t>;

std::map<TruthKey, const PacketTruth*> index_truth(const UplinkResult& r) {
  std::map<TruthKey, const PacketTruth*> m;
  for (const auto& t : r.truth) m[{t.pulse_index, t.implant_id}] = &t;
  return m;
}

/// I-DAC code -> level for 2^m-level ASK; -1 for codes off the grid.
std::vector<int> code_to_level_table(int levels) {
  std::vector<int> t(kMaxIdacCode + 1, -1);
  const int m = std::countr_zero(static_cast<unsigned>(levels));
  for (int l = 0; l < levels; ++l) t[level_to_code(l, m)] = l;
  return t;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << std::setprecision(10);
  return out;
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
  auto out = open_output(path);
  out << doc.dump(2) << '\n';
}

double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

nlohmann::json gate_json(const RxGate& g) { return {{"open_s", g.open}, {"close_s", g.close}}; }

}  // namespace

nlohmann::json ImplantReport::to_json() const {
  return {{"implant_id", implant_id},
          {"ask_levels", ask_levels},
          {"word_bits", word_bits},
          {"ber", ber.to_json()},
          {"throughput_bps", throughput_bps},
          {"packets_expected", packets_expected},
          {"packets_present", packets_present},
          {"words_received", words_received},
          {"fifo_dropped", fifo_dropped},
          {"clamp_events", clamp_events},
          {"header_separation", header_separation},
          {"centroids", centroids},
          {"thresholds", thresholds},
          {"diagnostics", diagnostics},
          {"snapshot", snapshot}};
}

const ImplantReport& RunArtifacts::report_for(std::uint8_t implant_id) const {
  for (const auto& r : reports) {
    if (r.implant_id == implant_id) return r;
  }
  throw ConfigError("no implant with ID " + std::to_string(implant_id));
}

nlohmann::json RunArtifacts::to_json() const {
  nlohmann::json implants = nlohmann::json::array();
  for (const auto& r : reports) implants.push_back(r.to_json());
  nlohmann::json config = nlohmann::json::array();
  for (const auto& e : config_events) {
    nlohmann::json actions = nlohmann::json::object();
    for (const auto& [id, a] : e.actions) actions[std::to_string(id)] = std::string(to_string(a));
    config.push_back({{"target_id", e.target_id},
                      {"start_s", e.start},
                      {"ack_detected", e.ack.detected},
                      {"ack_id", e.ack.id},
                      {"ack_separation", e.ack.separation},
                      {"actions", actions}});
  }
  return {{"seed", seed},
          {"config_digest", digest},
          {"frames", frames},
          {"uplink_start_s", uplink.start_time},
          {"duration_s", duration},
          {"rx_recording", rx_recording ? rx_recording->filename().string() : std::string()},
          {"aggregate_throughput_bps", aggregate_throughput_bps},
          {"spectral_efficiency_kbps_per_mhz", spectral_efficiency},
          {"exclusivity_violations", uplink.exclusivity_violations},
          {"envelope_fallbacks", uplink.envelope_fallbacks},
          {"config", config},
          {"implants", implants}};
}

std::vector<ImplantReport> analyze_uplink(const Simulator& sim, const UplinkResult& uplink,
                                          std::span<const ImplantDecode> decodes) {
  const auto& sc = sim.scenario();
  std::vector<ImplantReport> out;
  for (std::size_t i = 0; i < sc.implants.size(); ++i) {
    const auto& cfg = sc.implants[i].config;
    const auto& implant = sim.implants()[i];
    ImplantReport r;
    r.implant_id = cfg.implant_id;
    r.ask_levels = cfg.ask_levels;
    r.word_bits = cfg.word_bits();
    r.snapshot = implant.snapshot();
    r.fifo_dropped = implant.state().fifo.dropped();
    r.clamp_events = implant.clamp_events();
    r.packets_expected = static_cast<std::size_t>(
        std::count_if(uplink.observations.begin(), uplink.observations.end(),
                      [&](const PacketObservation& o) { return o.implant_id == cfg.implant_id; }));
    r.ber.reset_confusion(cfg.bits_per_symbol());
    const auto dec = std::find_if(decodes.begin(), decodes.end(),
                                  [&](const ImplantDecode& d) { return d.implant_id == cfg.implant_id; });
    if (dec != decodes.end()) {
      r.header_separation = dec->header_separation;
      r.centroids = dec->data_clusters.centroids;
      r.thresholds = dec->data_clusters.thresholds;
      r.diagnostics = dec->diagnostics;
      std::vector<BitVector> packets;
      for (const auto& p : dec->packets) {
        if (!p.present) continue;
        ++r.packets_present;
        r.words_received += p.words.size();
        if (!p.words.empty()) packets.push_back(words_to_bits(p.words, cfg.word_bits()));
      }
      if (cfg.lfsr_enable && !packets.empty()) {
        r.ber = compute_ber_packets(packets, lfsr_seed_for(cfg.implant_id), cfg.bits_per_symbol(), cfg.word_bits());
      }
    }
    if (uplink.duration > 0.0) {
      r.throughput_bps = static_cast<double>(r.words_received * static_cast<std::size_t>(r.word_bits)) / uplink.duration;
    }
    out.push_back(std::move(r));
  }
  return out;
}

RunArtifacts run_scenario(const Scenario& scenario, const RunOptions& options) {
  scenario.validate();
  Simulator sim(scenario, options.parallel);
  RunArtifacts a;
  a.seed = scenario.seed;
  a.digest = config_digest(scenario);
  a.config_events = sim.configure();
  a.frames = options.frames.value_or(scenario.duration_frames);

  std::unique_ptr<DnwfWriter> recorder;
  if (options.out_dir) {
    fs::create_directories(*options.out_dir);
    if (scenario.sim.record) {
      const double fs_rate = scenario.sim_rate();
      const std::int64_t base = std::llround(sim.uplink_start() * fs_rate);
      const auto count = static_cast<std::uint64_t>(
          std::llround(static_cast<double>(a.frames) * scenario.frame().frame_duration * fs_rate));
      a.rx_recording = *options.out_dir / "rx.dnwf";
      recorder = std::make_unique<DnwfWriter>(*a.rx_recording, fs_rate, static_cast<double>(base) / fs_rate, count);
    }
  }
  a.uplink = sim.run_uplink(a.frames, recorder.get());
  if (recorder) recorder->close();
  a.duration = a.uplink.duration;

  const auto decodes = decode_uplink(a.uplink.observations);
  a.reports = analyze_uplink(sim, a.uplink, decodes);
  for (const auto& r : a.reports) a.aggregate_throughput_bps += r.throughput_bps;
  a.spectral_efficiency = (a.aggregate_throughput_bps / 1e3) / (scenario.channel.carrier_freq / 1e6);

  const auto truth = index_truth(a.uplink);
  for (const auto& d : decodes) {
    DecodedStream s;
    s.implant_id = d.implant_id;
    std::uint64_t next = 0;
    for (const auto& p : d.packets) {
      if (!p.present) continue;
      const auto t = truth.find({p.pulse_index, d.implant_id});
      for (std::size_t k = 0; k < p.words.size(); ++k) {
        if (t != truth.end() && k < t->second->words.size()) next = t->second->words[k].sample_index;
        s.sample_index.push_back(next++);
        s.words.push_back(p.words[k]);
      }
    }
    a.reconstructed.push_back(std::move(s));
  }

  if (options.out_dir) {
    const auto& dir = *options.out_dir;
    write_json(dir / "schedule.json", schedule_to_json(a.uplink, scenario));
    write_eye_csv(dir / "eye.csv", a.uplink);
    write_histogram_csv(dir / "histogram.csv", a.uplink, a.reports);
    auto streams = open_output(dir / "streams.csv");
    streams << "implant_id,sample_index,word\n";
    for (const auto& s : a.reconstructed) {
      for (std::size_t k = 0; k < s.words.size(); ++k) {
        streams << int(s.implant_id) << ',' << s.sample_index[k] << ',' << s.words[k] << '\n';
      }
    }
    write_json(dir / "report.json", a.to_json());
  }
  return a;
}

nlohmann::json schedule_to_json(const UplinkResult& uplink, const Scenario& scenario) {
  nlohmann::json pulses = nlohmann::json::array();
  for (const auto& e : uplink.schedule) {
    if (e.implant_id == 0) continue;
    pulses.push_back({{"pulse_index", e.pulse_index},
                      {"frame", e.frame},
                      {"slot", e.slot},
                      {"start_s", e.start},
                      {"gate", gate_json(e.gate)},
                      {"implant_id", e.implant_id},
                      {"symbol_start_s", e.symbol_start},
                      {"symbol_duration_s", e.symbol_duration},
                      {"header_symbols", e.header_symbols},
                      {"max_data_symbols", e.max_data_symbols},
                      {"ask_levels", e.ask_levels},
                      {"word_bits", e.word_bits},
                      {"max_words", e.max_words},
                      {"lfsr_seed", e.lfsr_seed}});
  }
  return {{"schema_version", kScenarioSchemaVersion},
          {"carrier_hz", scenario.channel.carrier_freq},
          {"sample_rate_hz", scenario.sim_rate()},
          {"pulse_period_s", scenario.pulse_period},
          {"pulses", pulses}};
}

RecordedSchedule schedule_from_json(const nlohmann::json& doc) {
  try {
    RecordedSchedule s;
    s.carrier_freq = doc.at("carrier_hz").get<double>();
    for (const auto& p : doc.at("pulses")) {
      ScheduleEntry e;
      e.pulse_index = p.at("pulse_index").get<std::int64_t>();
      e.frame = p.value("frame", std::int64_t{0});
      e.slot = p.value("slot", 0);
      e.start = p.value("start_s", 0.0);
      e.gate = {p.at("gate").at("open_s").get<double>(), p.at("gate").at("close_s").get<double>()};
      e.implant_id = p.at("implant_id").get<std::uint8_t>();
      e.symbol_start = p.at("symbol_start_s").get<double>();
      e.symbol_duration = p.at("symbol_duration_s").get<double>();
      e.header_symbols = p.at("header_symbols").get<int>();
      e.max_data_symbols = p.at("max_data_symbols").get<int>();
      e.ask_levels = p.at("ask_levels").get<int>();
      e.word_bits = p.at("word_bits").get<int>();
      e.max_words = p.at("max_words").get<int>();
      e.lfsr_seed = p.value("lfsr_seed", std::uint16_t{0});
      if (e.symbol_duration <= 0.0 || e.gate.close <= e.gate.open) {
        throw ConfigError("schedule entry for pulse " + std::to_string(e.pulse_index) + " has an empty window");
      }
      s.entries.push_back(e);
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schedule: ") + e.what());
  }
}

nlohmann::json DemodReport::to_json() const {
  nlohmann::json implants = nlohmann::json::array();
  for (std::size_t i = 0; i < decodes.size(); ++i) {
    const auto& d = decodes[i];
    std::size_t present = 0;
    for (const auto& p : d.packets) present += p.present ? 1 : 0;
    implants.push_back({{"implant_id", d.implant_id},
                        {"packets", d.packets.size()},
                        {"packets_present", present},
                        {"words_received", d.words_received()},
                        {"header_separation", d.header_separation},
                        {"centroids", d.data_clusters.centroids},
                        {"thresholds", d.data_clusters.thresholds},
                        {"ber", ber[i].to_json()},
                        {"diagnostics", d.diagnostics}});
  }
  return {{"segments", segments}, {"diagnostics", diagnostics}, {"implants", implants}};
}

DemodReport demod_recording(const Waveform& recording, const RecordedSchedule& schedule, bool lfsr) {
  DemodReport rep;
  std::vector<RxGate> gates;
  for (const auto& e : schedule.entries) gates.push_back(e.gate);
  std::string diag;
  const auto segments = segment_pulses(recording, gates, &diag);
  if (!diag.empty()) rep.diagnostics.push_back(diag);
  rep.segments = segments.size();

  DemodConfig cfg;
  cfg.carrier_freq = schedule.carrier_freq;
  std::vector<PacketObservation> obs;
  for (const auto& seg : segments) {
    const auto& e = schedule.entries[static_cast<std::size_t>(seg.index)];
    const SymbolSchedule sched{e.symbol_start, e.symbol_duration,
                               static_cast<std::size_t>(e.header_symbols + e.max_data_symbols),
                               cfg.settle_guard_cycles / cfg.carrier_freq};
    const auto frame = demodulate_segment(seg.samples, cfg, sched);
    obs.push_back({e.pulse_index, e.implant_id, e.ask_levels, e.word_bits, e.max_words, frame.echo_voltages});
  }
  rep.decodes = decode_uplink(obs);
  for (const auto& d : rep.decodes) {
    BERReport ber;
    const auto e = std::find_if(schedule.entries.begin(), schedule.entries.end(),
                                [&](const ScheduleEntry& s) { return s.implant_id == d.implant_id; });
    const int m = std::countr_zero(static_cast<unsigned>(e->ask_levels));
    ber.reset_confusion(m);
    if (lfsr && e->lfsr_seed != 0) {
      std::vector<BitVector> packets;
      for (const auto& p : d.packets) {
        if (p.present && !p.words.empty()) packets.push_back(words_to_bits(p.words, e->word_bits));
      }
      if (!packets.empty()) ber = compute_ber_packets(packets, e->lfsr_seed, m, e->word_bits);
    }
    rep.ber.push_back(std::move(ber));
  }
  return rep;
}

void write_eye_csv(const fs::path& path, const UplinkResult& uplink) {
  auto out = open_output(path);
  out << "pulse_index,implant_id,symbol,t_rel_s,voltage,level\n";
  for (const auto& eye : uplink.eyes) {
    const auto table = code_to_level_table(eye.ask_levels);
    const double dt = eye.symbol_duration / kEyePointsPerSymbol;
    for (std::size_t j = 0; j < eye.points.size(); ++j) {
      const std::size_t sym = j / kEyePointsPerSymbol;
      const std::size_t q = j % kEyePointsPerSymbol;
      const int level = sym < eye.codes.size() ? table[eye.codes[sym]] : -1;
      out << eye.pulse_index << ',' << int(eye.implant_id) << ',' << sym << ',' << (static_cast<double>(q) + 0.5) * dt
          << ',' << eye.points[j] << ',' << level << '\n';
    }
  }
}

void write_histogram_csv(const fs::path& path, const UplinkResult& uplink, std::span<const ImplantReport> reports,
                         int bins) {
  const auto truth = index_truth(uplink);
  auto out = open_output(path);
  out << "implant_id,bin_center,count,centroid\n";
  for (const auto& r : reports) {
    std::vector<double> v;
    const int spw = r.word_bits / std::countr_zero(static_cast<unsigned>(r.ask_levels));
    for (const auto& o : uplink.observations) {
      if (o.implant_id != r.implant_id) continue;
      const auto t = truth.find({o.pulse_index, o.implant_id});
      if (t == truth.end()) continue;
      const std::size_t n = std::min(o.voltages.size(), kHeaderSymbols + t->second->words.size() * spw);
      for (std::size_t k = kHeaderSymbols; k < n; ++k) v.push_back(o.voltages[k]);
    }
    if (v.empty()) continue;
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *lo_it;
    const double width = std::max(*hi_it - lo, 1e-300) / bins;
    std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
    for (double x : v) ++counts[static_cast<std::size_t>(std::clamp(static_cast<int>((x - lo) / width), 0, bins - 1))];
    for (int b = 0; b < bins; ++b) {
      const double center = lo + (b + 0.5) * width;
      double nearest = std::nan("");
      for (double c : r.centroids) {
        if (std::isnan(nearest) || std::abs(c - center) < std::abs(nearest - center)) nearest = c;
      }
      out << int(r.implant_id) << ',' << center << ',' << counts[static_cast<std::size_t>(b)] << ',' << nearest << '\n';
    }
  }
}

LevelStatistics level_statistics(const UplinkResult& uplink, std::uint8_t implant_id) {
  const auto truth = index_truth(uplink);
  LevelStatistics st;
  std::vector<std::vector<double>> groups;
  for (const auto& o : uplink.observations) {
    if (o.implant_id != implant_id) continue;
    if (st.levels == 0) {
      st.levels = o.ask_levels;
      groups.resize(static_cast<std::size_t>(o.ask_levels));
    }
    const auto t = truth.find({o.pulse_index, o.implant_id});
    if (t == truth.end()) continue;
    const auto table = code_to_level_table(o.ask_levels);
    const auto& codes = t->second->codes;
    for (std::size_t k = kHeaderSymbols; k < codes.size() && k < o.voltages.size(); ++k) {
      const int l = table[codes[k]];
      if (l >= 0) groups[static_cast<std::size_t>(l)].push_back(o.voltages[k]);
    }
  }
  double ss = 0.0;
  std::size_t n = 0, used = 0;
  for (const auto& g : groups) {
    const double mean = g.empty() ? 0.0 : std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
    st.means.push_back(mean);
    st.counts.push_back(g.size());
    for (double x : g) ss += (x - mean) * (x - mean);
    n += g.size();
    used += g.empty() ? 0 : 1;
  }
  if (n > used) st.sigma = std::sqrt(ss / static_cast<double>(n - used));
  return st;
}

double oracle_ber(std::span<const double> means, std::span<const std::size_t> counts, double sigma) {
  const std::size_t levels = means.size();
  if (levels < 2 || counts.size() != levels || !std::has_single_bit(levels)) {
    throw DomainError("oracle needs 2^M level means with counts");
  }
  const int m = std::countr_zero(levels);
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  if (total == 0.0) throw DomainError("oracle needs at least one symbol");
  if (sigma <= 0.0) return 0.0;
  double ber = 0.0;
  for (std::size_t k = 0; k < levels; ++k) {
    const double p = static_cast<double>(counts[k]) / total;
    double e = 0.0;
    if (k + 1 < levels) {
      e += q_function((means[k + 1] - means[k]) / (2.0 * sigma)) * std::popcount(k ^ (k + 1));
    }
    if (k > 0) e += q_function((means[k] - means[k - 1]) / (2.0 * sigma)) * std::popcount(k ^ (k - 1));
    ber += p * e;
  }
  return ber / m;
}

double oracle_ber(const LevelStatistics& stats) { return oracle_ber(stats.means, stats.counts, stats.sigma); }

Scenario loopback_scenario(int ask_levels, int cycles_per_symbol, int samples_per_packet, std::uint64_t seed) {
  Scenario s;
  s.seed = seed;
  s.sim.record = false;
  s.sim.eye_packets = 0;
  ImplantSpec spec;
  spec.config.ask_levels = ask_levels;
  spec.config.cycles_per_symbol = cycles_per_symbol;
  spec.config.samples_per_packet = samples_per_packet;
  spec.config.validate();
  s.implants.push_back(spec);

  const double f = s.channel.carrier_freq;
  const auto window = static_cast<double>((kHeaderSymbols + spec.config.data_symbols()) * cycles_per_symbol);
  // Round trip covering the window plus the switch-over, in whole millimetres.
  const double tof = (window + 2.0) / (2.0 * f);
  s.channel.depth = std::max(s.channel.depth, std::ceil(tof * s.channel.sound_speed * 1e3) / 1e3);
  const double min_period = 2.0 * s.channel.time_of_flight() + (window + 4.0) / f;
  const double fill_period = samples_per_packet / s.afe.sample_rate;
  s.pulse_period = std::max(min_period, fill_period);
  s.channel.rng_seed = seed;
  s.validate();
  return s;
}

std::int64_t frames_for_bits(const Scenario& scenario, std::uint64_t min_bits) {
  const auto frame = scenario.frame();
  const double produced = std::floor(frame.frame_duration * scenario.afe.sample_rate);
  double worst = 0.0;
  for (const auto& spec : scenario.implants) {
    const double words = std::max(1.0, std::min<double>(spec.config.samples_per_packet, produced));
    const double frames = static_cast<double>(min_bits) / (words * spec.config.word_bits());
    worst = std::max(worst, frames);
  }
  // A little margin for the partial first packet and the sync window.
  return static_cast<std::int64_t>(std::ceil(worst * 1.02)) + 3;
}

BerPoint measure_ber(const Scenario& scenario, std::int64_t frames, bool parallel) {
  Simulator sim(scenario, parallel);
  sim.configure();
  const auto uplink = sim.run_uplink(frames);
  const auto decodes = decode_uplink(uplink.observations);
  const auto reports = analyze_uplink(sim, uplink, decodes);
  BerPoint p;
  p.ask_levels = scenario.implants.front().config.ask_levels;
  p.noise_rms = scenario.channel.noise_rms;
  p.implant_id = scenario.implants.front().config.implant_id;
  p.report = reports.front().ber;
  p.stats = level_statistics(uplink, p.implant_id);
  p.oracle = p.stats.counts.empty() ? 0.0 : oracle_ber(p.stats);
  return p;
}

double calibrate_noise(const Scenario& scenario, double target_ber, bool parallel) {
  if (!(target_ber > 0.0 && target_ber < 0.5)) throw DomainError("target BER must lie in (0, 0.5)");
  Scenario s = scenario;
  s.sim.record = false;
  s.sim.eye_packets = 0;
  const auto& cfg = s.implants.front().config;
  const std::int64_t frames = frames_for_bits(s, static_cast<std::uint64_t>(20000 * cfg.bits_per_symbol()));

  s.channel.noise_rms = 0.0;
  s.seed = derive_seed(scenario.seed, Stream::Trial, 1000);
  const auto clean = measure_ber(s, frames, parallel).stats;
  double spacing = INFINITY;
  for (std::size_t k = 1; k < clean.means.size(); ++k) spacing = std::min(spacing, clean.means[k] - clean.means[k - 1]);
  if (!(spacing > 0.0) || !std::isfinite(spacing)) throw DomainError("levels are not separated in the pilot run");

  // The envelope detector bends the level means with noise, so the update is
  // repeated on fresh pilots and damped geometrically after the first jump.
  double noise = spacing / 8.0;
  for (int iter = 0; iter < 6; ++iter) {
    s.channel.noise_rms = noise;
    s.seed = derive_seed(scenario.seed, Stream::Trial, 1001 + static_cast<std::uint64_t>(iter));
    s.channel.rng_seed = s.seed;
    const auto st = measure_ber(s, frames, parallel).stats;
    if (!(st.sigma > 0.0)) throw DomainError("pilot run shows no noise");
    const double gain = st.sigma / noise;
    double lo = std::log(spacing * 1e-3), hi = std::log(spacing * 10.0);
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (oracle_ber(st.means, st.counts, std::exp(mid)) < target_ber ? lo : hi) = mid;
    }
    const double next = std::exp(0.5 * (lo + hi)) / gain;
    noise = iter == 0 ? next : std::sqrt(noise * next);
  }
  return noise;
}

Scenario with_ask_levels(const Scenario& base, int ask_levels) {
  Scenario s = base;
  const auto frame = s.frame();
  for (auto& spec : s.implants) {
    spec.config.ask_levels = ask_levels;
    for (;;) {
      try {
        spec.config.validate();
        build_uplink_pulse(frame, spec.config, s.channel);
        break;
      } catch (const ScheduleError&) {
        if (spec.config.samples_per_packet <= 1) throw;
        --spec.config.samples_per_packet;
      }
    }
  }
  s.validate();
  return s;
}

std::vector<BerPoint> ber_sweep(const Scenario& base, std::span<const int> levels, std::span<const double> noise_levels,
                                std::uint64_t min_bits, const std::optional<fs::path>& out_dir, bool parallel) {
  if (min_bits < 1000) throw ConfigError("min_bits must be at least 1000");
  std::vector<BerPoint> points;
  for (std::size_t li = 0; li < levels.size(); ++li) {
    Scenario s_level = with_ask_levels(base, levels[li]);
    s_level.sim.record = false;
    s_level.sim.eye_packets = 0;
    const std::int64_t frames = frames_for_bits(s_level, min_bits);
    for (std::size_t ni = 0; ni < noise_levels.size(); ++ni) {
      Scenario s = s_level;
      s.channel.noise_rms = noise_levels[ni];
      s.seed = derive_seed(base.seed, Stream::Trial, li * noise_levels.size() + ni);
      s.channel.rng_seed = s.seed;
      points.push_back(measure_ber(s, frames, parallel));
    }
  }
  if (out_dir) {
    fs::create_directories(*out_dir);
    write_ber_csv(*out_dir / "ber.csv", points);
  }
  return points;
}

void write_ber_csv(const fs::path& path, std::span<const BerPoint> points) {
  auto out = open_output(path);
  out << "levels,noise_rms,implant_id,bits,errors,ber,bound,oracle_ber,sync_failures\n";
  for (const auto& p : points) {
    out << p.ask_levels << ',' << p.noise_rms << ',' << int(p.implant_id) << ',' << p.report.bits_compared << ','
        << p.report.bit_errors << ',' << p.report.ber_point << ',' << p.report.ber_upper_bound << ',' << p.oracle << ','
        << p.report.sync_failures << '\n';
  }
}

Reconstruction reconstruct_signal(const RunArtifacts& artifacts, const Scenario& scenario, std::uint8_t implant_id) {
  const auto spec = std::find_if(scenario.implants.begin(), scenario.implants.end(),
                                 [&](const ImplantSpec& s) { return s.config.implant_id == implant_id; });
  if (spec == scenario.implants.end()) throw ConfigError("no implant with ID " + std::to_string(implant_id));
  if (!spec->input_signal) throw ConfigError("implant " + std::to_string(implant_id) + " has no input signal");
  const auto stream = std::find_if(artifacts.reconstructed.begin(), artifacts.reconstructed.end(),
                                   [&](const DecodedStream& s) { return s.implant_id == implant_id; });

  Reconstruction r;
  r.implant_id = implant_id;
  if (stream == artifacts.reconstructed.end() || stream->words.empty()) return r;
  const Waveform in = load_signal(*spec->input_signal);
  const double rate = scenario.afe.sample_rate;
  const auto n = static_cast<std::size_t>(std::floor(in.duration() * rate));
  const auto ref = resample_windowed_sinc(in, rate, in.t0, n);
  double ss = 0.0;
  for (std::size_t k = 0; k < stream->words.size(); ++k) {
    const auto idx = stream->sample_index[k];
    if (idx >= ref.size()) continue;
    r.time.push_back(static_cast<double>(idx) / rate);
    r.decoded.push_back(unslice_voltage(stream->words[k], spec->config, scenario.afe));
    r.reference.push_back(ref[idx]);
    ss += (r.decoded.back() - r.reference.back()) * (r.decoded.back() - r.reference.back());
  }
  if (!r.reference.empty()) {
    const auto [lo, hi] = std::minmax_element(r.reference.begin(), r.reference.end());
    const double range = *hi - *lo;
    const double rms = std::sqrt(ss / static_cast<double>(r.reference.size()));
    r.nrmse = range > 0.0 ? rms / range : (rms > 0.0 ? INFINITY : 0.0);
  }
  return r;
}

SineFit sine_fit(std::span<const double> x, double sample_rate, double freq) {
  if (x.size() < 4) throw DomainError("sine fit needs at least 4 samples");
  // Normal equations for x ~ a cos + b sin + c.
  double m[3][4] = {};
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double w = 2.0 * M_PI * freq * static_cast<double>(n) / sample_rate;
    const double basis[3] = {std::cos(w), std::sin(w), 1.0};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) m[i][j] += basis[i] * basis[j];
      m[i][3] += basis[i] * x[n];
    }
  }
  for (int c = 0; c < 3; ++c) {
    int piv = c;
    for (int r = c + 1; r < 3; ++r) {
      if (std::abs(m[r][c]) > std::abs(m[piv][c])) piv = r;
    }
    std::swap(m[c], m[piv]);
    if (std::abs(m[c][c]) < 1e-300) throw DomainError("sine fit is singular");
    for (int r = 0; r < 3; ++r) {
      if (r == c) continue;
      const double k = m[r][c] / m[c][c];
      for (int j = c; j < 4; ++j) m[r][j] -= k * m[c][j];
    }
  }
  const double a = m[0][3] / m[0][0], b = m[1][3] / m[1][1], c = m[2][3] / m[2][2];
  double ss = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double w = 2.0 * M_PI * freq * static_cast<double>(n) / sample_rate;
    const double e = x[n] - (a * std::cos(w) + b * std::sin(w) + c);
    ss += e * e;
  }
  SineFit fit;
  fit.amplitude = std::hypot(a, b);
  fit.phase = std::atan2(-b, a);
  fit.offset = c;
  const double noise = ss / static_cast<double>(x.size());
  fit.sndr_db = 10.0 * std::log10(0.5 * fit.amplitude * fit.amplitude / noise);
  fit.enob = (fit.sndr_db - 1.76) / 6.02;
  return fit;
}

}  // namespace dustnet
