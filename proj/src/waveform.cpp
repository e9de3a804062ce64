#include "dustnet/waveform.hpp"

#include <cmath>
#include <numeric>

#include "dustnet/errors.hpp"

namespace dustnet {

std::int64_t Waveform::grid_index() const { return std::llround(t0 * sample_rate); }

double Waveform::energy() const noexcept {
  return std::inner_product(samples.begin(), samples.end(), samples.begin(), 0.0);
}

double Waveform::rms() const noexcept { return dustnet::rms(samples); }

void Waveform::validate() const {
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) {
    throw ConfigError("waveform sample_rate must be positive");
  }
  if (!std::isfinite(t0)) throw ConfigError("waveform t0 must be finite");
  for (double v : samples) {
    if (!std::isfinite(v)) throw ConfigError("waveform contains a non-finite sample");
  }
}

double rms(std::span<const double> x) noexcept {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

}  // namespace dustnet
