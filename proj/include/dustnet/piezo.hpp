#pragma once

#include <complex>

namespace dustnet {

/// Implant transducer near its two resonances. At either resonance the piezo
/// reduces to a Thevenin source `v_source` behind a purely resistive impedance.
struct PiezoModel {
  double f_series = 1.82e6;               // Hz
  double f_parallel = 2.00e6;             // Hz
  double z_thevenin_series = 2.0e3;       // ohm
  double z_thevenin_parallel = 20.0e3;    // ohm
  double v_source = 1.0;                  // V, open-circuit amplitude at the operating resonance

  /// Throws ConfigError when ordering or positivity invariants fail.
  void validate() const;
};

enum class ResonanceMode { Series, Parallel };

/// I-DAC drive: `code` of the 15 unit sources enabled, each sinking `unit_current`.
struct IdacSetting {
  double unit_current = 28e-6;  // A
  int code = 0;

  static constexpr double kMinUnitCurrent = 4e-6;
  static constexpr double kMaxUnitCurrent = 40e-6;
  static constexpr int kMaxCode = 15;

  void validate() const;
};

/// Normalized reflection coefficient for a resistive termination `z_e`
/// (pass +infinity for an open circuit). The resistance pairing follows the
/// published model verbatim: Parallel uses z_thevenin_series, Series uses
/// z_thevenin_parallel.
double gamma_from_termination(const PiezoModel& piezo, double z_e, ResonanceMode mode);

struct GammaValue {
  double gamma = 0.0;
  bool clamped = false;  // the linear value exceeded 1
};

/// Reflection coefficient at the parallel resonance for an I-DAC drive.
/// Linear in code with zero intercept, saturating at 1.
GammaValue gamma_from_idac(const PiezoModel& piezo, const IdacSetting& setting);

/// Thevenin resistance seen by the I-DAC when driving at the parallel resonance.
/// Matches the resistance gamma_from_termination pairs with ResonanceMode::Parallel.
double parallel_drive_resistance(const PiezoModel& piezo) noexcept;

/// Butterworth-Van Dyke element values fitted to the two resonance points.
struct BvdElements {
  double r_motional;
  double l_motional;
  double c_motional;
  double c_static;
};

BvdElements fit_bvd(const PiezoModel& piezo);

/// Electrical impedance of the fitted BVD network at frequency f (Hz).
std::complex<double> impedance_at(const PiezoModel& piezo, double f);

}  // namespace dustnet
