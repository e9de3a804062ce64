#pragma once

#include <span>
#include <string>
#include <vector>

#include "dustnet/waveform.hpp"

namespace dustnet {

struct Extremum {
  double t;  // s
  double v;
};

/// One maximum (or minimum) per carrier cycle. Search windows are centred on
/// the carrier phase of the largest (smallest) sample and span a quarter cycle
/// either side; the sample extremum is refined by a 3-point parabola.
std::vector<Extremum> track_extrema(const Waveform& w, double carrier_freq, bool maxima);

/// Monotone piecewise-cubic Hermite interpolation (Fritsch-Carlson slopes),
/// held constant outside [xs.front(), xs.back()].
std::vector<double> pchip_eval(std::span<const double> xs, std::span<const double> ys, std::span<const double> xq);

/// |analytic signal| via FFT.
std::vector<double> analytic_magnitude(std::span<const double> x);

struct EnvelopePair {
  Waveform positive;
  Waveform negative;
  bool fallback = false;  // fewer than 4 extrema; analytic-signal magnitude used
  std::string diagnostic;
};

/// Upper and lower envelopes on the input's time grid. Throws DomainError
/// for segments shorter than 3 carrier cycles.
EnvelopePair extract_envelope(const Waveform& segment, double carrier_freq);

}  // namespace dustnet
