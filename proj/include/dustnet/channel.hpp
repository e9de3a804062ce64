#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dustnet/pulse.hpp"
#include "dustnet/rng.hpp"
#include "dustnet/waveform.hpp"

namespace dustnet {

inline constexpr int kDefaultSamplesPerCycle = 64;
inline constexpr int kMinSamplesPerCycle = 16;

/// Single-path acoustic link between the external transducer and the implants.
struct ChannelConfig {
  double depth = 0.090;                // m
  double sound_speed = 1480.0;         // m/s
  double attenuation = 0.25;           // dB / cm / MHz
  double carrier_freq = 2.0e6;         // Hz
  double noise_rms = 0.0;              // receiver AWGN, waveform amplitude units
  double backscatter_efficiency = 1.0; // maps Gamma to reflected amplitude
  std::uint64_t rng_seed = 1;

  double time_of_flight() const noexcept { return depth / sound_speed; }
  double one_way_loss_db() const noexcept;
  double one_way_gain() const noexcept;
  double sim_rate(int samples_per_cycle = kDefaultSamplesPerCycle) const noexcept {
    return carrier_freq * samples_per_cycle;
  }

  void validate() const;
};

/// Piecewise-constant reflection coefficient. Step k applies from carrier
/// cycle `steps[k].cycle` (counted from `origin`) until the next step; before
/// the first step Gamma is 0.
struct GammaStep {
  std::int64_t cycle = 0;
  double gamma = 0.0;
};

struct GammaTrace {
  double origin = 0.0;       // s, cycle 0 starts here
  double carrier_freq = 2e6; // Hz
  std::vector<GammaStep> steps;

  double at(double t) const noexcept;
  bool is_zero() const noexcept;
  /// Throws DomainError for Gamma outside [0,1], ConfigError for unsorted steps.
  void validate() const;
};

/// Carrier at cfg.carrier_freq whose amplitude follows the descriptor, starting
/// at `t_start` with zero phase. Throws ConfigError if sim_rate < 16 x carrier.
Waveform synthesize_tx(const PulseDescriptor& pulse, const ChannelConfig& cfg, double sim_rate,
                       double t_start = 0.0);

/// Same carrier restricted to cycles [first_cycle, end_cycle).
Waveform synthesize_tx_span(const PulseDescriptor& pulse, const ChannelConfig& cfg, double sim_rate,
                            double t_start, std::int64_t first_cycle, std::int64_t end_cycle);

/// One-way propagation: delay by depth/sound_speed (fractional part by an
/// 8-tap windowed-sinc interpolator) and attenuation at the carrier frequency.
Waveform propagate(const Waveform& w, const ChannelConfig& cfg);

/// Delay and scale by arbitrary amounts; propagate() is delay_and_scale(w, ToF, gain).
Waveform delay_and_scale(const Waveform& w, double delay, double gain);

/// Sample-wise incident x Gamma(t) x efficiency.
Waveform backscatter(const Waveform& incident, const GammaTrace& gamma, double efficiency = 1.0);

/// Sample-aligned sum over the union of time spans. Throws ConfigError on
/// mismatched sample rates.
Waveform superpose(std::span<const Waveform> waves);

/// Adds white Gaussian noise of cfg.noise_rms from a generator seeded by cfg.rng_seed.
Waveform add_noise(const Waveform& w, const ChannelConfig& cfg);
void add_noise_inplace(std::span<double> x, double noise_rms, Rng& rng);

/// The 8 interpolation taps for a fractional delay in [0,1), applied to
/// samples floor(u)-3 .. floor(u)+4.
std::vector<double> fractional_delay_taps(double frac);

}  // namespace dustnet
