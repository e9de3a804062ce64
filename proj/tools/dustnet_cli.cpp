#include <CLI11.hpp>

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dustnet/dnwf.hpp"
#include "dustnet/errors.hpp"
#include "dustnet/experiments.hpp"
#include "dustnet/implant.hpp"
#include "dustnet/interrogator.hpp"
#include "dustnet/scenario.hpp"
#include "dustnet/simulator.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dustnet;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

std::vector<int> parse_levels(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("bad ASK level '" + item + "'");
    }
    if (!std::has_single_bit(static_cast<unsigned>(out.back())) || out.back() < 2 || out.back() > 16) {
      throw ConfigError("ASK level must be 2, 4, 8 or 16, got " + item);
    }
  }
  if (out.empty()) throw ConfigError("no ASK levels given");
  return out;
}

/// "start:stop:step" (inclusive) or a single value.
std::vector<double> parse_noise(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  try {
    while (std::getline(ss, item, ':')) parts.push_back(std::stod(item));
  } catch (const std::exception&) {
    throw ConfigError("bad noise range '" + text + "'");
  }
  if (parts.size() == 1) return parts;
  if (parts.size() != 3 || parts[2] <= 0.0 || parts[1] < parts[0] || parts[0] < 0.0) {
    throw ConfigError("noise range must be start:stop:step with step > 0 and stop >= start >= 0");
  }
  std::vector<double> out;
  const auto n = static_cast<long>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
  for (long k = 0; k <= n; ++k) out.push_back(parts[0] + static_cast<double>(k) * parts[2]);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

int cmd_run(const std::string& scenario_path, std::optional<std::uint64_t> seed, const fs::path& out,
            std::optional<std::int64_t> frames, bool serial) {
  Scenario s = load_scenario(scenario_path);
  if (seed) {
    s.seed = *seed;
    s.channel.rng_seed = *seed;
  }
  RunOptions opt;
  opt.out_dir = out;
  opt.parallel = !serial;
  opt.frames = frames;
  const auto a = run_scenario(s, opt);
  std::cout << "implant_id,throughput_bps,bits,errors,ber_bound,sync_failures\n";
  for (const auto& r : a.reports) {
    std::cout << int(r.implant_id) << ',' << r.throughput_bps << ',' << r.ber.bits_compared << ','
              << r.ber.bit_errors << ',';
    if (r.ber.bits_compared > 0) {
      std::cout << r.ber.ber_upper_bound;
    } else {
      std::cout << '-';
    }
    std::cout << ',' << r.ber.sync_failures << '\n';
  }
  std::cout << "aggregate_bps " << a.aggregate_throughput_bps << ", spectral efficiency "
            << a.spectral_efficiency << " kb/s/MHz, artifacts in " << out.string() << '\n';
  for (const auto& spec : s.implants) {
    if (!spec.input_signal || spec.config.lfsr_enable) continue;
    const auto id = spec.config.implant_id;
    const auto rec = reconstruct_signal(a, s, id);
    const auto path = out / ("reconstruction_" + std::to_string(id) + ".csv");
    std::ofstream csv(path);
    if (!csv) throw ConfigError("cannot write " + path.string());
    csv.precision(12);
    csv << "time_s,decoded_v,reference_v\n";
    for (std::size_t k = 0; k < rec.time.size(); ++k) {
      csv << rec.time[k] << ',' << rec.decoded[k] << ',' << rec.reference[k] << '\n';
    }
    std::cout << "implant " << int(id) << " reconstruction NRMSE " << rec.nrmse << " (" << path.string() << ")\n";
  }
  return 0;
}

int cmd_ber(const std::string& scenario_path, const std::string& levels, const std::string& noise,
            std::uint64_t min_bits, const fs::path& out, bool serial) {
  const Scenario s = load_scenario(scenario_path);
  const auto lv = parse_levels(levels);
  const auto nz = parse_noise(noise);
  const auto points = ber_sweep(s, lv, nz, min_bits, out, !serial);
  std::cout << "levels,noise_rms,bits,errors,ber,bound,oracle_ber\n";
  for (const auto& p : points) {
    std::cout << p.ask_levels << ',' << p.noise_rms << ',' << p.report.bits_compared << ',' << p.report.bit_errors
              << ',' << p.report.ber_point << ',' << p.report.ber_upper_bound << ',' << p.oracle << '\n';
  }
  return 0;
}

int cmd_discover(const std::string& scenario_path, bool full, const std::optional<fs::path>& out) {
  const Scenario s = load_scenario(scenario_path);
  Simulator sim(s);
  const auto ids = discover_implants(sim, candidate_ids(full), s.implants.front().config);
  json doc = {{"candidates", full ? 255 : 8}, {"discovered", ids}};
  if (out) {
    fs::create_directories(*out);
    write_text(*out / "discover.json", doc.dump(2) + "\n");
  }
  std::cout << doc.dump(2) << '\n';
  return 0;
}

int cmd_demod(const fs::path& wave, const fs::path& schedule_path, bool lfsr, const std::optional<fs::path>& out) {
  Waveform rec;
  try {
    rec = read_dnwf(wave);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  const auto schedule = schedule_from_json(read_json(schedule_path));
  const auto rep = demod_recording(rec, schedule, lfsr);
  const auto doc = rep.to_json();
  if (out) {
    fs::create_directories(*out);
    write_text(*out / "demod.json", doc.dump(2) + "\n");
  }
  std::cout << doc.dump(2) << '\n';
  return 0;
}

int cmd_export(const fs::path& run_dir, const std::string& format, const fs::path& out) {
  const json report = read_json(run_dir / "report.json");
  fs::create_directories(out);
  if (format == "json") {
    json summary = json::array();
    for (const auto& r : report.at("implants")) {
      summary.push_back({{"implant_id", r.at("implant_id")},
                         {"ask_levels", r.at("ask_levels")},
                         {"throughput_bps", r.at("throughput_bps")},
                         {"bits_compared", r.at("ber").at("bits_compared")},
                         {"bit_errors", r.at("ber").at("bit_errors")},
                         {"ber_upper_bound", r.at("ber").at("ber_upper_bound")}});
    }
    const json doc = {{"seed", report.at("seed")},
                      {"config_digest", report.at("config_digest")},
                      {"aggregate_throughput_bps", report.at("aggregate_throughput_bps")},
                      {"spectral_efficiency_kbps_per_mhz", report.at("spectral_efficiency_kbps_per_mhz")},
                      {"implants", summary}};
    write_text(out / "summary.json", doc.dump(2) + "\n");
    return 0;
  }
  std::ostringstream csv;
  csv.precision(10);
  csv << "implant_id,ask_levels,throughput_bps,packets_expected,packets_present,bits_compared,bit_errors,ber_point,"
         "ber_upper_bound,sync_failures\n";
  for (const auto& r : report.at("implants")) {
    const auto& b = r.at("ber");
    csv << r.at("implant_id").get<int>() << ',' << r.at("ask_levels").get<int>() << ','
        << r.at("throughput_bps").get<double>() << ',' << r.at("packets_expected").get<std::uint64_t>() << ','
        << r.at("packets_present").get<std::uint64_t>() << ',' << b.at("bits_compared").get<std::uint64_t>() << ','
        << b.at("bit_errors").get<std::uint64_t>() << ',' << b.at("ber_point").get<double>() << ','
        << b.at("ber_upper_bound").get<double>() << ',' << b.at("sync_failures").get<std::uint64_t>() << '\n';
  }
  write_text(out / "summary.csv", csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DustNet ultrasonic backscatter link simulator"};
  app.require_subcommand(1);
  bool serial = false;
  app.add_flag("--serial", serial, "Render pulses without OpenMP");

  std::string scenario_path, levels = "2,4,8,16", noise = "0", format = "json";
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> frames;
  std::uint64_t min_bits = 100000;
  std::string out = "out";
  std::optional<std::string> opt_out;
  std::string wave, schedule, run_dir;
  bool full = false, no_lfsr = false;

  auto* run = app.add_subcommand("run", "Configure, run the uplink and write all artifacts");
  run->add_option("--scenario", scenario_path, "Scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Root seed (overrides the scenario)");
  run->add_option("--out", out, "Output directory");
  run->add_option("--frames", frames, "Frames to run (overrides the scenario)")->check(CLI::PositiveNumber);

  auto* ber = app.add_subcommand("ber", "BER against receiver noise for several ASK levels");
  ber->add_option("--scenario", scenario_path, "Scenario file")->required()->check(CLI::ExistingFile);
  ber->add_option("--levels", levels, "Comma separated ASK levels");
  ber->add_option("--noise", noise, "Noise RMS, start:stop:step or a single value");
  ber->add_option("--min-bits", min_bits, "Bits per point, at least 1000");
  ber->add_option("--out", out, "Output directory");

  auto* disc = app.add_subcommand("discover", "Probe candidate IDs with Config pulses");
  disc->add_option("--scenario", scenario_path, "Scenario file")->required()->check(CLI::ExistingFile);
  disc->add_flag("--full", full, "Probe IDs 1..255 instead of 1..8");
  disc->add_option("--out", opt_out, "Output directory");

  auto* dem = app.add_subcommand("demod", "Demodulate a recording against its schedule");
  dem->add_option("--wave", wave, "DNWF recording")->required()->check(CLI::ExistingFile);
  dem->add_option("--schedule", schedule, "schedule.json from a run")->required()->check(CLI::ExistingFile);
  dem->add_flag("--no-lfsr", no_lfsr, "Skip BER against the PRBS");
  dem->add_option("--out", opt_out, "Output directory");

  auto* exp = app.add_subcommand("export", "Summarize a run directory as CSV or JSON");
  exp->add_option("--run", run_dir, "Run output directory")->required()->check(CLI::ExistingDirectory);
  exp->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  exp->add_option("--out", out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run) return cmd_run(scenario_path, seed, out, frames, serial);
    if (*ber) return cmd_ber(scenario_path, levels, noise, min_bits, out, serial);
    if (*disc) return cmd_discover(scenario_path, full, opt_out ? std::optional<fs::path>(*opt_out) : std::nullopt);
    if (*dem) {
      return cmd_demod(wave, schedule, !no_lfsr, opt_out ? std::optional<fs::path>(*opt_out) : std::nullopt);
    }
    if (*exp) return cmd_export(run_dir, format, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ScheduleError& e) {
    std::cerr << "schedule violation (" << e.term() << "): " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
