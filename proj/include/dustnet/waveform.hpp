#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dustnet {

/// Uniformly sampled real time series. Every signal in the simulator
/// (TX drive, piezo voltage, echoes, envelopes) is carried in one of these.
struct Waveform {
  std::vector<double> samples;
  double sample_rate = 1.0;  // Hz
  double t0 = 0.0;           // time of samples[0], seconds

  Waveform() = default;
  Waveform(std::vector<double> s, double rate, double start)
      : samples(std::move(s)), sample_rate(rate), t0(start) {}

  static Waveform zeros(std::size_t n, double rate, double start) {
    return Waveform(std::vector<double>(n, 0.0), rate, start);
  }

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  double dt() const noexcept { return 1.0 / sample_rate; }
  double duration() const noexcept { return static_cast<double>(samples.size()) / sample_rate; }
  double time_at(std::size_t i) const noexcept { return t0 + static_cast<double>(i) / sample_rate; }
  double end_time() const noexcept { return time_at(samples.size()); }

  /// Index of samples[0] on the global grid t = n / sample_rate.
  std::int64_t grid_index() const;

  double energy() const noexcept;
  double rms() const noexcept;

  /// Throws ConfigError on a non-positive rate or non-finite samples.
  void validate() const;
};

/// Root-mean-square of a span.
double rms(std::span<const double> x) noexcept;

}  // namespace dustnet
