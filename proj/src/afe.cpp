#include "dustnet/afe.hpp"

#include <algorithm>
#include <cmath>

#include "dustnet/errors.hpp"

namespace dustnet {

void AfeModel::validate() const {
  if (!(gain > 0.0)) throw ConfigError("afe gain must be positive");
  if (!(full_scale > 0.0)) throw ConfigError("afe full_scale must be positive");
  if (adc_bits != 12) throw ConfigError("afe adc_bits must be 12");
  if (!(sample_rate > 0.0)) throw ConfigError("afe sample_rate must be positive");
  if (!(input_noise_rms >= 0.0)) throw ConfigError("afe input_noise_rms must be >= 0");
  if (std::abs(sample_rate * 8.0 - chop_freq) > 1e-9 * chop_freq) {
    throw ConfigError("afe sample_rate must equal chop_freq / 8");
  }
}

std::uint16_t afe_quantize(double v_in, const AfeModel& afe) {
  const double half = afe.full_scale / 2.0;
  const double v = std::clamp(afe.gain * v_in, -half, half);
  const double levels = static_cast<double>(1 << afe.adc_bits);
  const double code = std::floor((v + half) / afe.full_scale * levels);
  return static_cast<std::uint16_t>(std::clamp(code, 0.0, static_cast<double>(afe.max_code())));
}

std::uint16_t afe_sample(double v_in_diff, const AfeModel& afe, Rng& rng) {
  double n = 0.0;
  if (afe.input_noise_rms > 0.0) n = std::normal_distribution<double>(0.0, afe.input_noise_rms)(rng);
  return afe_quantize(v_in_diff + n, afe);
}

int slice_width(int ask_levels) noexcept { return ask_levels == 8 ? 9 : 8; }

std::uint32_t slice_bits(std::uint16_t code, AdcSlice slice, int width) {
  const int start = slice_start(slice);
  const int avail = std::min(width, 12 - start);
  return (static_cast<std::uint32_t>(code) >> start) & ((1U << avail) - 1U);
}

std::uint32_t slice_bits(std::uint16_t code, const LinkConfig& cfg) {
  return slice_bits(code, cfg.adc_slice, cfg.word_bits());
}

double unslice_code(std::uint32_t word, AdcSlice slice, int width) {
  const int start = slice_start(slice);
  const int w = std::min(width, 12 - start);
  const std::int64_t modulus = std::int64_t{1} << w;
  const std::int64_t mid = (2048 >> start) & (modulus - 1);
  std::int64_t delta = (static_cast<std::int64_t>(word) - mid) % modulus;
  if (delta < -modulus / 2) delta += modulus;
  if (delta >= modulus / 2) delta -= modulus;
  const double step = static_cast<double>(std::int64_t{1} << start);
  return 2048.0 + static_cast<double>(delta) * step + (step - 1.0) / 2.0;
}

double code_to_input_voltage(double code, const AfeModel& afe) {
  return ((code + 0.5) * afe.lsb() - afe.full_scale / 2.0) / afe.gain;
}

double unslice_voltage(std::uint32_t word, const LinkConfig& cfg, const AfeModel& afe) {
  return code_to_input_voltage(unslice_code(word, cfg.adc_slice, cfg.word_bits()), afe);
}

}  // namespace dustnet
