#pragma once

#include <complex>
#include <span>
#include <vector>

namespace dustnet {

/// Direct-form-II-transposed biquad with a0 = 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

/// Cascade of second-order sections.
struct SosFilter {
  std::vector<Biquad> sections;
  double sample_rate = 1.0;

  std::complex<double> response(double f) const;
  double magnitude(double f) const { return std::abs(response(f)); }
  double magnitude_db(double f) const;
};

/// Bilinear transform with the corner prewarped. Throws ConfigError for a
/// corner at or above Nyquist or a non-positive order.
SosFilter butterworth_highpass(int order, double corner, double sample_rate);
SosFilter butterworth_lowpass(int order, double corner, double sample_rate);

/// Type 2 Chebyshev low-pass: equiripple stopband `atten_db` down from
/// `stop_edge` upward, monotone passband with unity DC gain.
SosFilter cheby2_lowpass(int order, double stop_edge, double atten_db, double sample_rate);

/// Causal filtering, zero initial state.
std::vector<double> sosfilt(const SosFilter& f, std::span<const double> x);

/// Zero-phase forward-backward filtering with odd-reflection padding and
/// steady-state initial conditions at both ends.
std::vector<double> filtfilt(const SosFilter& f, std::span<const double> x);

/// As above with an explicit reflection length (capped at x.size() - 1).
std::vector<double> filtfilt(const SosFilter& f, std::span<const double> x, std::size_t pad_len);

}  // namespace dustnet
