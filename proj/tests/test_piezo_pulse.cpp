#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "dustnet/errors.hpp"
#include "dustnet/piezo.hpp"
#include "dustnet/pulse.hpp"

using namespace dustnet;

namespace {

/// Solves the Thevenin loop V_S = V_PZ + I * Z_Th for V_PZ by fixed-point
/// iteration and returns the normalized voltage drop.
double thevenin_loop_gamma(double v_source, double z_th, double current) {
  double v_pz = v_source;
  for (int i = 0; i < 200; ++i) v_pz = 0.5 * v_pz + 0.5 * (v_source - current * z_th);
  return (v_source - v_pz) / v_source;
}

}  // namespace

TEST_CASE("gamma from termination limits") {
  PiezoModel p;
  CHECK(gamma_from_termination(p, 0.0, ResonanceMode::Parallel) == 1.0);
  CHECK(gamma_from_termination(p, std::numeric_limits<double>::infinity(), ResonanceMode::Parallel) == 0.0);
  CHECK(gamma_from_termination(p, p.z_thevenin_series, ResonanceMode::Parallel) == doctest::Approx(0.5));
  CHECK(gamma_from_termination(p, p.z_thevenin_parallel, ResonanceMode::Series) == doctest::Approx(0.5));
  CHECK_THROWS_AS(gamma_from_termination(p, -1.0, ResonanceMode::Parallel), DomainError);
}

TEST_CASE("gamma from termination is monotone in the load") {
  PiezoModel p;
  double prev_par = 2.0, prev_ser = -1.0;
  for (double z = 0.0; z < 1e6; z = z * 1.5 + 10.0) {
    const double gp = gamma_from_termination(p, z, ResonanceMode::Parallel);
    const double gs = gamma_from_termination(p, z, ResonanceMode::Series);
    CHECK(gp < prev_par);
    CHECK(gs > prev_ser);
    prev_par = gp;
    prev_ser = gs;
  }
}

TEST_CASE("gamma from I-DAC is linear with zero intercept") {
  PiezoModel p;
  CHECK(gamma_from_idac(p, {28e-6, 0}).gamma == 0.0);
  const double step = gamma_from_idac(p, {28e-6, 1}).gamma;
  for (int k = 0; k <= 15; ++k) {
    const auto g = gamma_from_idac(p, {28e-6, k});
    CHECK_FALSE(g.clamped);
    CHECK(g.gamma == doctest::Approx(k * step).epsilon(1e-12));
  }
}

TEST_CASE("hand-evaluated gamma agrees with the Thevenin loop") {
  PiezoModel p;
  p.z_thevenin_series = 5e3;
  p.v_source = 1.0;
  const auto g = gamma_from_idac(p, {10e-6, 15});
  CHECK(g.gamma == doctest::Approx(0.75));
  CHECK(g.gamma == doctest::Approx(thevenin_loop_gamma(1.0, 5e3, 15 * 10e-6)).epsilon(1e-9));
}

TEST_CASE("gamma clamps and reports saturation") {
  PiezoModel p;
  p.z_thevenin_series = 5e3;
  const auto g = gamma_from_idac(p, {40e-6, 15});
  CHECK(g.gamma == 1.0);
  CHECK(g.clamped);
  CHECK_THROWS_AS(gamma_from_idac(p, {2e-6, 1}), ConfigError);
  CHECK_THROWS_AS(gamma_from_idac(p, {10e-6, 16}), ConfigError);
}

TEST_CASE("BVD impedance is resistive at both resonances") {
  PiezoModel p;
  const auto zs = impedance_at(p, p.f_series);
  const auto zp = impedance_at(p, p.f_parallel);
  CHECK(std::abs(zs) == doctest::Approx(p.z_thevenin_series).epsilon(1e-6));
  CHECK(std::abs(zp) == doctest::Approx(p.z_thevenin_parallel).epsilon(1e-6));
  CHECK(std::abs(zs.imag()) <= 1e-6 * std::abs(zs));
  CHECK(std::abs(zp.imag()) <= 1e-6 * std::abs(zp));
  CHECK_THROWS_AS(impedance_at(p, 0.0), DomainError);
}

TEST_CASE("impedance magnitude rises monotonically between resonances") {
  PiezoModel p;
  double prev = 0.0;
  for (int i = 0; i <= 200; ++i) {
    const double f = p.f_series + (p.f_parallel - p.f_series) * i / 200.0;
    const double z = std::abs(impedance_at(p, f));
    CHECK(z >= prev);
    prev = z;
  }
}

TEST_CASE("piezo invariants") {
  PiezoModel p;
  p.f_series = 2.1e6;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = PiezoModel{};
  p.z_thevenin_series = 30e3;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = PiezoModel{};
  p.v_source = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("pulse descriptor bookkeeping") {
  PulseDescriptor p;
  p.kind = PulseKind::Uplink;
  p.segments.push_back({Section::ChargeUp, "charge-up", {1.0}, 100, {}});
  p.segments.push_back({Section::HeaderWindow, "header", std::vector<double>(8, 1.0), 4, {}});
  p.segments.push_back({Section::DataWindow, "data", std::vector<double>(24, 1.0), 4, {}});
  CHECK(p.total_cycles() == 100 + 32 + 96);
  CHECK(p.offset_of("header") == 100);
  CHECK(p.offset_of(Section::DataWindow) == 132);
  CHECK(p.duration() == doctest::Approx(228 / 2e6));
  CHECK_NOTHROW(p.validate());
  CHECK_THROWS_AS(p.offset_of("missing"), ConfigError);
  std::swap(p.segments[0], p.segments[1]);
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("frame schedule duration") {
  const auto s = FrameSchedule::make(237.5e-6, 8, 60.81e-6);
  CHECK(s.frame_duration == doctest::Approx(1.9e-3));
  CHECK(s.rx_gate_offset == doctest::Approx(60.81e-6));
  CHECK_THROWS_AS(FrameSchedule::make(237.5e-6, 0, 60e-6), ConfigError);
}
