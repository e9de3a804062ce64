#pragma once

#include <cstdint>

#include "dustnet/link_config.hpp"
#include "dustnet/rng.hpp"

namespace dustnet {

/// Behavioral amplifier + 12-bit SAR ADC. Chopping is treated as ideal
/// offset cancellation, so there is no offset term.
struct AfeModel {
  double gain = 100.0;
  double full_scale = 2.0;         // V, ADC input range
  int adc_bits = 12;
  double sample_rate = 6250.0;     // Hz
  double input_noise_rms = 9.8e-6; // V, input referred
  double chop_freq = 50e3;         // Hz

  int max_code() const noexcept { return (1 << adc_bits) - 1; }
  double lsb() const noexcept { return full_scale / static_cast<double>(1 << adc_bits); }
  void validate() const;
};

/// Noise-free quantizer: clamp(gain * v, +-FS/2) mapped mid-rise onto 0..4095.
std::uint16_t afe_quantize(double v_in, const AfeModel& afe);

/// Adds input-referred Gaussian noise from `rng`, then quantizes.
std::uint16_t afe_sample(double v_in_diff, const AfeModel& afe, Rng& rng);

/// Word width for a level count: 9 bits at 8-level, else 8.
int slice_width(int ask_levels) noexcept;

/// Bits [start, start + width) of the code, truncated at bit 11.
std::uint32_t slice_bits(std::uint16_t code, AdcSlice slice, int width);
std::uint32_t slice_bits(std::uint16_t code, const LinkConfig& cfg);

/// Best estimate of the 12-bit code behind a sliced word, assuming the signal
/// sits near mid-scale; bits below the slice are replaced by their midpoint.
double unslice_code(std::uint32_t word, AdcSlice slice, int width);

/// Input-referred voltage for a (possibly fractional) code.
double code_to_input_voltage(double code, const AfeModel& afe);

/// Composition of unslice_code and code_to_input_voltage.
double unslice_voltage(std::uint32_t word, const LinkConfig& cfg, const AfeModel& afe);

}  // namespace dustnet
