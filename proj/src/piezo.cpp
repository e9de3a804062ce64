#include "dustnet/piezo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dustnet/errors.hpp"

namespace dustnet {

void PiezoModel::validate() const {
  if (!(f_series > 0.0 && f_parallel > 0.0)) throw ConfigError("piezo resonances must be positive");
  if (!(f_series < f_parallel)) throw ConfigError("piezo f_series must be below f_parallel");
  if (!(z_thevenin_series > 0.0 && z_thevenin_parallel > 0.0)) {
    throw ConfigError("piezo Thevenin resistances must be positive");
  }
  if (!(z_thevenin_series < z_thevenin_parallel)) {
    throw ConfigError("piezo series-resonance resistance must be below the parallel one");
  }
  if (!(v_source > 0.0)) throw ConfigError("piezo v_source must be positive");
}

void IdacSetting::validate() const {
  // Small tolerance so values decoded from the 4-bit register grid pass.
  constexpr double eps = 1e-12;
  if (unit_current < kMinUnitCurrent - eps || unit_current > kMaxUnitCurrent + eps) {
    throw ConfigError("I-DAC unit current must lie in 4..40 uA");
  }
  if (code < 0 || code > kMaxCode) throw ConfigError("I-DAC code must lie in 0..15");
}

double gamma_from_termination(const PiezoModel& piezo, double z_e, ResonanceMode mode) {
  if (std::isnan(z_e) || z_e < 0.0) throw DomainError("termination impedance must be >= 0");
  if (mode == ResonanceMode::Parallel) {
    if (std::isinf(z_e)) return 0.0;
    return piezo.z_thevenin_series / (z_e + piezo.z_thevenin_series);
  }
  if (std::isinf(z_e)) return 1.0;
  return z_e / (z_e + piezo.z_thevenin_parallel);
}

double parallel_drive_resistance(const PiezoModel& piezo) noexcept { return piezo.z_thevenin_series; }

GammaValue gamma_from_idac(const PiezoModel& piezo, const IdacSetting& setting) {
  setting.validate();
  // V_S - V_PZ = I * Z_Th, normalized by V_S.
  const double linear =
      static_cast<double>(setting.code) * setting.unit_current * parallel_drive_resistance(piezo) /
      piezo.v_source;
  if (linear > 1.0) return {1.0, true};
  return {std::max(linear, 0.0), false};
}

BvdElements fit_bvd(const PiezoModel& piezo) {
  piezo.validate();
  const double ws = 2.0 * std::numbers::pi * piezo.f_series;
  const double wp = 2.0 * std::numbers::pi * piezo.f_parallel;
  const double zs = piezo.z_thevenin_series;
  const double zp = piezo.z_thevenin_parallel;
  // Zero-phase at w with |Z| = z requires R (1 + w^2 C0^2 z^2) = z and X = w C0 R z,
  // X being the motional reactance. Two resonances fix C0 and R, then L and C.
  const double c0_sq = (zp - zs) / (zs * zp * (zp * wp * wp - zs * ws * ws));
  const double c0 = std::sqrt(c0_sq);
  const double r = zs / (1.0 + ws * ws * c0_sq * zs * zs);
  const double xs = ws * c0 * r * zs;
  const double xp = wp * c0 * r * zp;
  // L w - D / w = X with D = 1/C
  const double det = ws * (-1.0 / wp) - (-1.0 / ws) * wp;
  const double l = (xs * (-1.0 / wp) - (-1.0 / ws) * xp) / det;
  const double d = (ws * xp - wp * xs) / det;
  if (!(l > 0.0 && d > 0.0 && c0 > 0.0)) throw ConfigError("piezo resonances admit no BVD fit");
  return {r, l, 1.0 / d, c0};
}

std::complex<double> impedance_at(const PiezoModel& piezo, double f) {
  if (!(f > 0.0)) throw DomainError("impedance frequency must be positive");
  const auto bvd = fit_bvd(piezo);
  const double w = 2.0 * std::numbers::pi * f;
  const std::complex<double> z_motional(bvd.r_motional, w * bvd.l_motional - 1.0 / (w * bvd.c_motional));
  const std::complex<double> y = std::complex<double>(0.0, w * bvd.c_static) + 1.0 / z_motional;
  return 1.0 / y;
}

}  // namespace dustnet
