#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dustnet/channel.hpp"
#include "dustnet/dnwf.hpp"
#include "dustnet/errors.hpp"
#include "dustnet/pulse.hpp"

using namespace dustnet;

namespace {

PulseDescriptor tone_pulse(std::int64_t cycles, double amplitude = 1.0) {
  PulseDescriptor p;
  p.segments.push_back({Section::ChargeUp, "charge-up", {amplitude}, static_cast<int>(cycles), {}});
  return p;
}

Waveform sine(double f, double fs, std::size_t n, double t0 = 0.0, double a = 1.0) {
  Waveform w = Waveform::zeros(n, fs, t0);
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = a * std::sin(2.0 * M_PI * f * w.time_at(i));
  return w;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("time of flight at 90 mm in oil") {
  ChannelConfig c;
  CHECK(c.time_of_flight() == doctest::Approx(60.81e-6).epsilon(1e-3));
  CHECK(c.time_of_flight() == 0.090 / 1480.0);
}

TEST_CASE("one-way loss matches a cascade of 1 cm slabs") {
  ChannelConfig c;
  CHECK(c.one_way_loss_db() == doctest::Approx(4.5));
  CHECK(c.one_way_gain() == doctest::Approx(0.5957).epsilon(1e-3));
  double cascade = 1.0;
  for (int cm = 0; cm < 9; ++cm) cascade *= std::pow(10.0, -0.25 * 1.0 * 2.0 / 20.0);
  CHECK(c.one_way_gain() == doctest::Approx(cascade).epsilon(1e-12));
}

TEST_CASE("zero attenuation is a pure delay") {
  ChannelConfig c;
  c.attenuation = 0.0;
  const double fs = c.sim_rate();
  const Waveform w = sine(2e6, fs, 4096);
  const Waveform out = propagate(w, c);
  // Compare against the analytically delayed tone away from the edges.
  double err = 0.0;
  for (std::size_t i = 16; i + 16 < out.size(); ++i) {
    const double t = out.time_at(i) - c.time_of_flight();
    err = std::max(err, std::abs(out.samples[i] - std::sin(2.0 * M_PI * 2e6 * t)));
  }
  CHECK(err < 5e-3);
}

TEST_CASE("synthesized tone durations follow the cycle count") {
  ChannelConfig c;
  const double fs = c.sim_rate();
  const Waveform w = synthesize_tx(tone_pulse(100), c, fs);
  CHECK(w.duration() == doctest::Approx(50e-6));
  double peak = 0.0;
  for (double v : w.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak == doctest::Approx(1.0).epsilon(1e-3));

  PulseDescriptor empty;
  CHECK(synthesize_tx(empty, c, fs).empty());
  CHECK_THROWS_AS(synthesize_tx(tone_pulse(10), c, 15.0 * c.carrier_freq), ConfigError);
}

TEST_CASE("preamble blocks alternate every cycles_per_symbol cycles") {
  ChannelConfig c;
  const double fs = c.sim_rate();
  PulseDescriptor p;
  std::vector<double> amps;
  for (int k = 0; k < 32; ++k) {
    amps.push_back(1.0);
    amps.push_back(0.5);
  }
  p.segments.push_back({Section::Preamble, "preamble", amps, 8, {}});
  const Waveform w = synthesize_tx(p, c, fs);
  REQUIRE(w.size() == 64u * 8u * 64u);
  for (int block = 0; block < 64; ++block) {
    double peak = 0.0;
    for (int i = 0; i < 8 * 64; ++i) peak = std::max(peak, std::abs(w.samples[static_cast<std::size_t>(block * 512 + i)]));
    CHECK(peak == doctest::Approx(block % 2 == 0 ? 1.0 : 0.5).epsilon(1e-3));
  }
}

TEST_CASE("backscatter by constant and keyed gamma") {
  ChannelConfig c;
  const double fs = c.sim_rate();
  const Waveform inc = synthesize_tx(tone_pulse(128), c, fs);
  GammaTrace zero{0.0, c.carrier_freq, {}};
  CHECK(backscatter(inc, zero).energy() == 0.0);

  GammaTrace one{0.0, c.carrier_freq, {{0, 1.0}}};
  const Waveform copy = backscatter(inc, one);
  CHECK(max_abs_diff(copy.samples, inc.samples) == 0.0);

  GammaTrace keyed{0.0, c.carrier_freq, {}};
  for (int s = 0; s < 8; ++s) keyed.steps.push_back({s * 16, s % 2 == 0 ? 0.0 : 1.0});
  const Waveform ook = backscatter(inc, keyed);
  for (std::size_t i = 0; i < ook.size(); ++i) {
    const auto symbol = (i / 64) / 16;
    CHECK(ook.samples[i] == (symbol % 2 == 0 ? 0.0 : inc.samples[i]));
  }

  GammaTrace bad{0.0, c.carrier_freq, {{0, 1.2}}};
  CHECK_THROWS_AS(backscatter(inc, bad), DomainError);
}

TEST_CASE("superposition identity, cancellation and disjoint energy") {
  const double fs = 128e6;
  const Waveform a = sine(2e6, fs, 1000, 0.0);
  Waveform neg = a;
  for (double& v : neg.samples) v = -v;
  const std::vector<Waveform> one{a};
  CHECK(max_abs_diff(superpose(one).samples, a.samples) == 0.0);
  const std::vector<Waveform> pair{a, neg};
  CHECK(superpose(pair).energy() == 0.0);

  const Waveform b = sine(2e6, fs, 500, 2000.0 / fs, 0.5);
  const std::vector<Waveform> disjoint{a, b};
  const Waveform sum = superpose(disjoint);
  CHECK(sum.size() == 2500u);
  CHECK(sum.energy() == doctest::Approx(a.energy() + b.energy()).epsilon(1e-12));

  const std::vector<Waveform> mixed{a, Waveform::zeros(10, fs / 2, 0.0)};
  CHECK_THROWS_AS(superpose(mixed), ConfigError);
}

TEST_CASE("receiver noise statistics and determinism") {
  ChannelConfig c;
  const Waveform w = Waveform::zeros(1'000'000, c.sim_rate(), 0.0);
  CHECK(max_abs_diff(add_noise(w, c).samples, w.samples) == 0.0);
  c.noise_rms = 0.3;
  c.rng_seed = 99;
  const Waveform n1 = add_noise(w, c);
  CHECK(rms(n1.samples) == doctest::Approx(0.3).epsilon(0.02));
  const Waveform n2 = add_noise(w, c);
  CHECK(n1.samples == n2.samples);
  c.rng_seed = 100;
  CHECK(add_noise(w, c).samples != n1.samples);
}

TEST_CASE("propagation is linear") {
  ChannelConfig c;
  const double fs = c.sim_rate();
  Waveform w1 = sine(2e6, fs, 2000);
  Waveform w2 = sine(1.3e6, fs, 2000, 0.0, 0.4);
  Waveform mix = w1;
  for (std::size_t i = 0; i < mix.size(); ++i) mix.samples[i] = 2.5 * w1.samples[i] + w2.samples[i];
  const Waveform p1 = propagate(w1, c), p2 = propagate(w2, c), pm = propagate(mix, c);
  double err = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < pm.size(); ++i) {
    err = std::max(err, std::abs(pm.samples[i] - (2.5 * p1.samples[i] + p2.samples[i])));
    scale = std::max(scale, std::abs(pm.samples[i]));
  }
  CHECK(err <= 1e-9 * scale);
}

TEST_CASE("attenuation and delay compose over two path segments") {
  ChannelConfig d1, d2, d12;
  d1.depth = 0.031;
  d2.depth = 0.047;
  d12.depth = 0.078;
  CHECK(d1.one_way_gain() * d2.one_way_gain() == doctest::Approx(d12.one_way_gain()).epsilon(1e-12));
  const double fs = d1.sim_rate();
  const Waveform w = sine(2e6, fs, 3000);
  const Waveform two = propagate(propagate(w, d1), d2);
  const Waveform one = propagate(w, d12);
  CHECK(two.t0 + 3.0 / fs == doctest::Approx(one.t0).epsilon(1e-9));
  CHECK(std::sqrt(two.energy() / one.energy()) == doctest::Approx(1.0).epsilon(2e-3));
}

TEST_CASE("round trip delays a keyed burst by twice the time of flight") {
  ChannelConfig c;
  const double fs = c.sim_rate();
  PulseDescriptor p;
  p.segments.push_back({Section::ChargeUp, "lead", {0.0}, 20, {}});
  p.segments.push_back({Section::ChargeUp, "burst", {1.0}, 10, {}});
  const Waveform tx = synthesize_tx(p, c, fs);
  const Waveform rx = propagate(propagate(tx, c), c);
  // First sample of the echo whose magnitude exceeds half the burst peak.
  const double peak = c.one_way_gain() * c.one_way_gain();
  double first_tx = 0.0, first_rx = 0.0;
  for (std::size_t i = 0; i < tx.size(); ++i) {
    if (std::abs(tx.samples[i]) > 0.5) {
      first_tx = tx.time_at(i);
      break;
    }
  }
  for (std::size_t i = 0; i < rx.size(); ++i) {
    if (std::abs(rx.samples[i]) > 0.5 * peak) {
      first_rx = rx.time_at(i);
      break;
    }
  }
  CHECK(first_rx - first_tx == doctest::Approx(2.0 * c.time_of_flight()).epsilon(1e-4));
}

TEST_CASE("DNWF round trip and header layout") {
  const auto path = std::filesystem::temp_directory_path() / "dustnet_test_roundtrip.dnwf";
  Waveform w({0.5, -0.25, 1.0, 0.0}, 128e6, 1.5e-3);
  write_dnwf(path, w);
  const Waveform r = read_dnwf(path);
  CHECK(r.sample_rate == w.sample_rate);
  CHECK(r.t0 == w.t0);
  CHECK(r.samples == w.samples);
  std::ifstream in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  CHECK(std::string(magic, 4) == "DNWF");
  CHECK(std::filesystem::file_size(path) == kDnwfHeaderBytes + 4 * 4);

  {
    std::ofstream bad(path, std::ios::binary);
    bad << "NOPE";
  }
  CHECK_THROWS_AS(read_dnwf(path), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("streamed DNWF zero-fills gaps") {
  const auto path = std::filesystem::temp_directory_path() / "dustnet_test_stream.dnwf";
  {
    DnwfWriter wr(path, 1e6, 0.0, 10);
    const std::vector<double> a{1.0, 2.0};
    wr.write_at(3, a);
    wr.close();
  }
  const Waveform r = read_dnwf(path);
  CHECK(r.samples == std::vector<double>{0, 0, 0, 1, 2, 0, 0, 0, 0, 0});
  std::filesystem::remove(path);
}
