#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dustnet/errors.hpp"
#include "dustnet/experiments.hpp"
#include "dustnet/scenario.hpp"
#include "dustnet/simulator.hpp"

using namespace dustnet;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = DUSTNET_SCENARIO_DIR;

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("dustnet_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json base_doc() {
  std::ifstream in(kScenarios / "single_implant.json");
  return nlohmann::json::parse(in);
}

Scenario population(int n, std::uint64_t seed, double noise = 0.0) {
  Scenario s;
  s.seed = seed;
  s.sim.record = false;
  s.sim.eye_packets = 0;
  s.channel.noise_rms = noise;
  for (int i = 0; i < n; ++i) {
    ImplantSpec spec;
    spec.config.implant_id = static_cast<std::uint8_t>(10 + i);
    spec.config.n_implants = n;
    spec.config.uplink_index = i + 1;
    s.implants.push_back(spec);
  }
  return s;
}

int cli(const std::string& args) {
  const std::string cmd = std::string("\"") + DUSTNET_CLI + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Neural-like test input: two slow oscillations plus biphasic spikes slowed
// down four times, about 8 mV peak to peak.
fs::path write_neural_csv(const fs::path& dir, double duration) {
  const auto path = dir / "neural.csv";
  std::ofstream out(path);
  out << "time,amplitude\n";
  const double rate = 20e3;
  const auto n = static_cast<std::size_t>(duration * rate);
  out.precision(12);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    double v = 1.5e-3 * std::sin(2.0 * M_PI * 7.0 * t) + 0.8e-3 * std::sin(2.0 * M_PI * 31.0 * t + 0.4);
    const double phase = std::fmod(t, 0.037);
    const double w = 4e-3;  // slowed spike width
    if (phase < 2.0 * w) v += -3e-3 * std::sin(M_PI * phase / w) * std::exp(-phase / w);
    out << t << ',' << v << '\n';
  }
  return path;
}

}  // namespace

TEST_CASE("shipped scenarios parse and validate") {
  for (const auto& name : {"single_implant.json", "reference_4of8.json", "eight_implants.json", "eight_level.json",
                           "neural_demo.json"}) {
    CAPTURE(name);
    const auto s = load_scenario(kScenarios / name);
    CHECK_NOTHROW(s.validate());
    const auto again = parse_scenario(scenario_to_json(s));
    CHECK(scenario_to_json(again) == scenario_to_json(s));
  }
  const auto ref = load_scenario(kScenarios / "reference_4of8.json");
  CHECK(ref.implants.size() == 4u);
  CHECK(ref.n_implants() == 8);
}

TEST_CASE("scenario errors are reported before simulation") {
  auto doc = base_doc();
  doc["channel"]["depth_mm"] = 90;
  CHECK_THROWS_AS(parse_scenario(doc), ConfigError);

  doc = base_doc();
  doc["implants"][0]["ask_level"] = 4;
  CHECK_THROWS_AS(parse_scenario(doc), ConfigError);

  doc = base_doc();
  doc.erase("schema_version");
  CHECK_THROWS_AS(parse_scenario(doc), ConfigError);

  doc = base_doc();
  doc["implants"][0]["implant_id"] = 0;
  CHECK_THROWS_AS(parse_scenario(doc), ConfigError);

  doc = base_doc();
  doc["implants"].push_back(doc["implants"][0]);
  doc["implants"][0]["n_implants"] = 2;
  doc["implants"][1]["n_implants"] = 2;
  CHECK_THROWS_AS(parse_scenario(doc), ConfigError);  // duplicate ID
  doc["implants"][1]["implant_id"] = 2;
  CHECK_THROWS_AS(parse_scenario(doc), ConfigError);  // duplicate uplink index
  doc["implants"][1]["uplink_index"] = 3;
  CHECK_THROWS_AS(parse_scenario(doc), ConfigError);  // index outside 1..n
  doc["implants"][1]["uplink_index"] = 2;
  CHECK_NOTHROW(parse_scenario(doc));

  CHECK_THROWS_AS(load_scenario(kScenarios / "missing.json"), ConfigError);
}

TEST_CASE("configuration digest ignores the seed") {
  auto a = population(2, 1);
  auto b = population(2, 99);
  CHECK(config_digest(a) == config_digest(b));
  b.channel.noise_rms = 1e-3;
  CHECK(config_digest(a) != config_digest(b));
}

TEST_CASE("Config Mode then Uplink Mode") {
  Simulator sim(population(4, 3));
  const auto events = sim.configure();
  REQUIRE(events.size() == 5u);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(events[i].ack.detected);
    CHECK(events[i].target_id == sim.implants()[i].id());
  }
  CHECK(events.back().target_id == 0);
  for (const auto& imp : sim.implants()) CHECK(imp.state().mode == ImplantMode::UplinkMode);
  CHECK(sim.uplink_start() == sim.now());
}

TEST_CASE("equal seeds give byte-identical artifacts") {
  auto s = population(2, 5, 2e-3);
  s.sim.record = true;
  s.sim.eye_packets = 8;
  s.duration_frames = 6;
  const auto a = scratch("det_a"), b = scratch("det_b");
  run_scenario(s, {a, true, {}});
  run_scenario(s, {b, true, {}});
  for (const auto& f : {"rx.dnwf", "schedule.json", "eye.csv", "histogram.csv", "streams.csv", "report.json"}) {
    CAPTURE(f);
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
}

TEST_CASE("serial and parallel kernels agree") {
  auto s = population(3, 8, 1e-3);
  s.sim.record = true;
  s.sim.batch_pulses = 7;
  s.duration_frames = 5;
  const auto a = scratch("ser"), b = scratch("par");
  run_scenario(s, {a, false, {}});
  run_scenario(s, {b, true, {}});
  CHECK(slurp(a / "rx.dnwf") == slurp(b / "rx.dnwf"));
  CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
}

TEST_CASE("a different seed moves the noise, not the configuration") {
  auto s = population(1, 1, 4e-3);
  s.sim.record = true;
  s.duration_frames = 4;
  const auto a = scratch("seed_a"), b = scratch("seed_b");
  const auto ra = run_scenario(s, {a, true, {}});
  s.seed = 2;
  const auto rb = run_scenario(s, {b, true, {}});
  CHECK(ra.digest == rb.digest);
  CHECK(slurp(a / "rx.dnwf") != slurp(b / "rx.dnwf"));
}

TEST_CASE("reference scenario: 96 bits per implant per frame") {
  auto s = load_scenario(kScenarios / "reference_4of8.json");
  s.sim.record = false;
  s.channel.noise_rms = 0.0;
  const auto run = run_scenario(s, {std::nullopt, true, 40});
  CHECK(run.uplink.exclusivity_violations == 0u);
  for (const auto& r : run.reports) {
    CAPTURE(int(r.implant_id));
    // 6250 words/s of 8 bits; words still queued at the end are not counted.
    CHECK(r.throughput_bps <= 50e3 * 1.001);
    CHECK(r.throughput_bps >= 50e3 * (1.0 - 1.0 / 40.0) * 0.99);
    CHECK(r.ber.bit_errors == 0u);
  }
}

TEST_CASE("aggregate rate scales with the number of implants") {
  std::vector<double> per;
  for (int n : {1, 2, 4, 8}) {
    auto s = population(n, 1);
    // Equal 0.4 s runs, so the words left in the FIFO weigh below 1%.
    const auto run = run_scenario(s, {std::nullopt, true, 1684 / n});
    double sum = 0.0;
    for (const auto& r : run.reports) sum += r.throughput_bps;
    CHECK(run.aggregate_throughput_bps == doctest::Approx(sum));
    per.push_back(run.aggregate_throughput_bps / n);
  }
  for (double p : per) CHECK(p == doctest::Approx(per.front()).epsilon(0.01));
}

TEST_CASE("mid-run schedule violations name the frame") {
  auto s = population(1, 1);
  s.implants[0].config.cycles_per_symbol = 16;
  s.implants[0].config.samples_per_packet = 16;
  s.implants[0].config.ask_levels = 2;
  CHECK_THROWS_AS(Simulator{s}, ScheduleError);
}

TEST_CASE("BER sweep basics") {
  const auto base = loopback_scenario(16, 4, 12, 21);
  const std::vector<int> levels{2, 16};
  CHECK_THROWS_AS(ber_sweep(base, levels, std::vector<double>{0.0}, 999), ConfigError);

  const double n16 = calibrate_noise(base, 2e-2);
  const std::vector<double> noise{0.0, 0.5 * n16, n16, 2.0 * n16};
  const auto dir = scratch("sweep");
  const auto pts = ber_sweep(base, levels, noise, 20000, dir);
  REQUIRE(pts.size() == 8u);
  CHECK(fs::exists(dir / "ber.csv"));
  auto at = [&](int l, std::size_t ni) -> const BerPoint& {
    for (const auto& p : pts)
      if (p.ask_levels == l && p.noise_rms == noise[ni]) return p;
    throw std::runtime_error("missing point");
  };
  for (int l : levels) {
    CHECK(at(l, 0).report.bit_errors == 0u);
    CHECK(at(l, 0).report.bits_compared >= 20000u);
    for (std::size_t i = 1; i < noise.size(); ++i) {
      // Nondecreasing up to a 95% binomial margin.
      const auto& lo = at(l, i - 1).report;
      const auto& hi = at(l, i).report;
      const double margin = 1.96 * std::sqrt(lo.ber_point * (1.0 - lo.ber_point) / lo.bits_compared +
                                             hi.ber_point * (1.0 - hi.ber_point) / hi.bits_compared);
      CHECK(hi.ber_point + margin >= lo.ber_point);
    }
  }
  for (std::size_t i = 1; i < noise.size(); ++i) CHECK(at(16, i).report.ber_point >= at(2, i).report.ber_point);
}

TEST_CASE("reconstruction needs an input signal") {
  auto s = loopback_scenario(16, 4, 12, 1);
  const auto run = run_scenario(s, {std::nullopt, true, 3});
  CHECK_THROWS_AS(reconstruct_signal(run, s, s.implants[0].config.implant_id), ConfigError);
}

TEST_CASE("DC input at mid-scale decodes to a constant mid-code stream") {
  const auto dir = scratch("dc");
  {
    std::ofstream out(dir / "dc.csv");
    out << "time,amplitude\n";
    for (int i = 0; i < 2000; ++i) out << i * 1e-4 << ",0\n";
  }
  auto s = loopback_scenario(16, 4, 12, 2);
  s.afe.input_noise_rms = 0.0;
  s.implants[0].config.lfsr_enable = false;
  s.implants[0].input_signal = dir / "dc.csv";
  const auto run = run_scenario(s, {std::nullopt, true, 20});
  REQUIRE(run.reconstructed.size() == 1u);
  const auto& words = run.reconstructed[0].words;
  REQUIRE(words.size() > 100u);
  for (auto w : words) CHECK(w == words.front());
  const auto rec = reconstruct_signal(run, s, s.implants[0].config.implant_id);
  for (double v : rec.decoded) CHECK(std::abs(v) < code_to_input_voltage(2048.0 + 8.0, s.afe) - code_to_input_voltage(2048.0, s.afe));
}

TEST_CASE("slowed neural waveform is reconstructed within 2% NRMSE") {
  const auto dir = scratch("neural");
  auto s = loopback_scenario(16, 4, 12, 3);
  s.implants[0].config.lfsr_enable = false;
  s.implants[0].input_signal = write_neural_csv(dir, 0.4);
  const auto run = run_scenario(s, {std::nullopt, true, 180});
  const auto rec = reconstruct_signal(run, s, s.implants[0].config.implant_id);
  REQUIRE(rec.decoded.size() > 1000u);
  CHECK(rec.nrmse < 0.02);
  MESSAGE("NRMSE " << rec.nrmse);
}

TEST_CASE("CLI exit codes") {
  const auto out = scratch("cli");
  const auto single = (kScenarios / "single_implant.json").string();
  CHECK(cli("run --scenario " + single + " --seed 4 --frames 2 --out " + out.string()) == 0);
  CHECK(fs::exists(out / "report.json"));
  CHECK(cli("export --run " + out.string() + " --format csv --out " + out.string()) == 0);
  CHECK(fs::exists(out / "summary.csv"));
  CHECK(cli("export --run " + out.string() + " --format json --out " + out.string()) == 0);
  CHECK(cli("demod --wave " + (out / "rx.dnwf").string() + " --schedule " + (out / "schedule.json").string() +
            " --out " + out.string()) == 0);
  CHECK(fs::exists(out / "demod.json"));
  CHECK(cli("discover --scenario " + single + " --out " + out.string()) == 0);
  CHECK(fs::exists(out / "discover.json"));

  CHECK(cli("run --scenario " + (out / "nope.json").string()) == 1);
  CHECK(cli("run --bogus") == 1);
  CHECK(cli("ber --scenario " + single + " --levels 3 --noise 0") == 1);
  CHECK(cli("export --run " + out.string() + " --format xml") == 1);

  auto doc = base_doc();
  doc["implants"][0]["cycles_per_symbol"] = 16;
  doc["implants"][0]["samples_per_packet"] = 16;
  doc["implants"][0]["ask_levels"] = 2;
  const auto bad = out / "overflow.json";
  std::ofstream(bad) << doc.dump(2);
  CHECK(cli("run --scenario " + bad.string() + " --out " + out.string()) == 2);
}
