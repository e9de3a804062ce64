#include "dustnet/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dustnet/errors.hpp"

namespace dustnet {
namespace {

constexpr double kPi = std::numbers::pi;

struct AmplitudeRun {
  std::int64_t begin;
  std::int64_t end;
  double amplitude;
};

std::vector<AmplitudeRun> amplitude_runs(const PulseDescriptor& pulse) {
  std::vector<AmplitudeRun> runs;
  std::int64_t cycle = 0;
  for (const auto& seg : pulse.segments) {
    for (double a : seg.amplitudes) {
      const std::int64_t end = cycle + seg.cycles_per_symbol;
      if (!runs.empty() && runs.back().amplitude == a && runs.back().end == cycle) {
        runs.back().end = end;
      } else {
        runs.push_back({cycle, end, a});
      }
      cycle = end;
    }
  }
  return runs;
}

double window_sinc(double v) {
  constexpr double half = 4.0;
  if (std::abs(v) >= half) return 0.0;
  const double sinc = v == 0.0 ? 1.0 : std::sin(kPi * v) / (kPi * v);
  const double w = 0.42 + 0.5 * std::cos(kPi * v / half) + 0.08 * std::cos(2.0 * kPi * v / half);
  return sinc * w;
}

}  // namespace

double ChannelConfig::one_way_loss_db() const noexcept {
  return attenuation * (depth * 100.0) * (carrier_freq * 1e-6);
}

double ChannelConfig::one_way_gain() const noexcept { return std::pow(10.0, -one_way_loss_db() / 20.0); }

void ChannelConfig::validate() const {
  if (!(depth > 0.0)) throw ConfigError("channel depth must be positive");
  if (!(sound_speed > 0.0)) throw ConfigError("channel sound_speed must be positive");
  if (!(attenuation >= 0.0)) throw ConfigError("channel attenuation must be >= 0");
  if (!(carrier_freq > 0.0)) throw ConfigError("channel carrier_freq must be positive");
  if (!(noise_rms >= 0.0)) throw ConfigError("channel noise_rms must be >= 0");
  if (!(backscatter_efficiency >= 0.0)) throw ConfigError("backscatter_efficiency must be >= 0");
}

double GammaTrace::at(double t) const noexcept {
  const auto cycle = static_cast<std::int64_t>(std::floor((t - origin) * carrier_freq + 1e-9));
  double g = 0.0;
  for (const auto& s : steps) {
    if (s.cycle > cycle) break;
    g = s.gamma;
  }
  return g;
}

bool GammaTrace::is_zero() const noexcept {
  return std::all_of(steps.begin(), steps.end(), [](const GammaStep& s) { return s.gamma == 0.0; });
}

void GammaTrace::validate() const {
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (!(steps[i].gamma >= 0.0 && steps[i].gamma <= 1.0)) {
      throw DomainError("reflection coefficient outside [0,1]");
    }
    if (i > 0 && steps[i].cycle <= steps[i - 1].cycle) throw ConfigError("gamma steps must be increasing");
  }
}

Waveform synthesize_tx(const PulseDescriptor& pulse, const ChannelConfig& cfg, double sim_rate,
                       double t_start) {
  return synthesize_tx_span(pulse, cfg, sim_rate, t_start, 0, pulse.total_cycles());
}

Waveform synthesize_tx_span(const PulseDescriptor& pulse, const ChannelConfig& cfg, double sim_rate,
                            double t_start, std::int64_t first_cycle, std::int64_t end_cycle) {
  cfg.validate();
  if (sim_rate < kMinSamplesPerCycle * cfg.carrier_freq * (1.0 - 1e-12)) {
    throw ConfigError("sim_rate must be at least 16 x carrier_freq");
  }
  const double f = cfg.carrier_freq;
  const double spc = sim_rate / f;
  first_cycle = std::clamp<std::int64_t>(first_cycle, 0, pulse.total_cycles());
  end_cycle = std::clamp<std::int64_t>(end_cycle, first_cycle, pulse.total_cycles());

  const std::int64_t n0 = std::llround(t_start * sim_rate);
  const auto first = static_cast<std::int64_t>(std::ceil(static_cast<double>(first_cycle) * spc - 1e-9));
  const auto last = static_cast<std::int64_t>(std::ceil(static_cast<double>(end_cycle) * spc - 1e-9));
  Waveform out = Waveform::zeros(static_cast<std::size_t>(last - first), sim_rate,
                                 static_cast<double>(n0 + first) / sim_rate);

  // Integral samples-per-cycle is the common case; use a one-cycle table there.
  const auto spc_int = static_cast<std::int64_t>(std::llround(spc));
  const bool tabled = std::abs(spc - static_cast<double>(spc_int)) < 1e-9;
  std::vector<double> table;
  if (tabled) {
    table.resize(static_cast<std::size_t>(spc_int));
    for (std::int64_t i = 0; i < spc_int; ++i) {
      table[static_cast<std::size_t>(i)] = std::sin(2.0 * kPi * static_cast<double>(i) / spc);
    }
  }

  const auto runs = amplitude_runs(pulse);
  std::size_t r = 0;
  for (std::int64_t i = first; i < last; ++i) {
    const double phase_cycles = static_cast<double>(i) / spc;
    const auto cycle = static_cast<std::int64_t>(std::floor(phase_cycles + 1e-9));
    while (r < runs.size() && runs[r].end <= cycle) ++r;
    if (r == runs.size()) break;
    const double a = runs[r].amplitude;
    if (a == 0.0) continue;
    const double s = tabled ? table[static_cast<std::size_t>(i % spc_int)] : std::sin(2.0 * kPi * phase_cycles);
    out.samples[static_cast<std::size_t>(i - first)] = a * s;
  }
  return out;
}

std::vector<double> fractional_delay_taps(double frac) {
  std::vector<double> taps(8);
  // Taps ordered i = floor(u)-3 .. floor(u)+4,
  // where u - floor(u) = 1 - frac for frac in (0,1).
  const double r = frac == 0.0 ? 0.0 : 1.0 - frac;
  double sum = 0.0;
  for (int k = 0; k < 8; ++k) {
    const double v = r - static_cast<double>(k - 3);
    taps[static_cast<std::size_t>(k)] = window_sinc(v);
    sum += taps[static_cast<std::size_t>(k)];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

Waveform delay_and_scale(const Waveform& w, double delay, double gain) {
  const double total = delay * w.sample_rate;
  const auto k = static_cast<std::int64_t>(std::floor(total + 1e-12));
  double d = total - static_cast<double>(k);
  if (d < 1e-9) d = 0.0;
  const std::size_t n = w.samples.size();
  if (d == 0.0) {
    Waveform out(w.samples, w.sample_rate, w.t0 + static_cast<double>(k) / w.sample_rate);
    for (double& v : out.samples) v *= gain;
    return out;
  }
  // y[j] at t0 + (k + j - 3)/fs samples x at fractional index u = j - 3 - d.
  constexpr std::int64_t lead = 3;
  Waveform out = Waveform::zeros(n + 7, w.sample_rate, w.t0 + static_cast<double>(k - lead) / w.sample_rate);
  const auto taps = fractional_delay_taps(d);
  const auto ni = static_cast<std::int64_t>(n);
  for (std::int64_t j = 0; j < static_cast<std::int64_t>(out.samples.size()); ++j) {
    const std::int64_t base = j - lead - 1;  // floor(u) for d in (0,1)
    double acc = 0.0;
    const std::int64_t lo = std::max<std::int64_t>(base - 3, 0);
    const std::int64_t hi = std::min<std::int64_t>(base + 4, ni - 1);
    for (std::int64_t i = lo; i <= hi; ++i) {
      acc += w.samples[static_cast<std::size_t>(i)] * taps[static_cast<std::size_t>(i - base + 3)];
    }
    out.samples[static_cast<std::size_t>(j)] = gain * acc;
  }
  return out;
}

Waveform propagate(const Waveform& w, const ChannelConfig& cfg) {
  return delay_and_scale(w, cfg.time_of_flight(), cfg.one_way_gain());
}

Waveform backscatter(const Waveform& incident, const GammaTrace& gamma, double efficiency) {
  gamma.validate();
  Waveform out = Waveform::zeros(incident.size(), incident.sample_rate, incident.t0);
  if (gamma.steps.empty()) return out;
  std::size_t s = 0;
  double g = 0.0;
  for (std::size_t i = 0; i < incident.size(); ++i) {
    const double t = incident.time_at(i);
    const auto cycle = static_cast<std::int64_t>(std::floor((t - gamma.origin) * gamma.carrier_freq + 1e-9));
    while (s < gamma.steps.size() && gamma.steps[s].cycle <= cycle) {
      g = gamma.steps[s].gamma;
      ++s;
    }
    out.samples[i] = incident.samples[i] * g * efficiency;
  }
  return out;
}

Waveform superpose(std::span<const Waveform> waves) {
  if (waves.empty()) return {};
  const double rate = waves.front().sample_rate;
  std::int64_t lo = INT64_MAX, hi = INT64_MIN;
  for (const auto& w : waves) {
    if (std::abs(w.sample_rate - rate) > 1e-9 * rate) throw ConfigError("superpose: mismatched sample rates");
    if (w.empty()) continue;
    lo = std::min(lo, w.grid_index());
    hi = std::max(hi, w.grid_index() + static_cast<std::int64_t>(w.size()));
  }
  if (lo == INT64_MAX) return Waveform({}, rate, waves.front().t0);
  Waveform out = Waveform::zeros(static_cast<std::size_t>(hi - lo), rate, static_cast<double>(lo) / rate);
  for (const auto& w : waves) {
    const auto off = static_cast<std::size_t>(w.grid_index() - lo);
    for (std::size_t i = 0; i < w.size(); ++i) out.samples[off + i] += w.samples[i];
  }
  return out;
}

void add_noise_inplace(std::span<double> x, double noise_rms, Rng& rng) {
  if (noise_rms == 0.0) return;
  std::normal_distribution<double> normal(0.0, noise_rms);
  for (double& v : x) v += normal(rng);
}

Waveform add_noise(const Waveform& w, const ChannelConfig& cfg) {
  if (!(cfg.noise_rms >= 0.0)) throw ConfigError("noise_rms must be >= 0");
  Waveform out = w;
  Rng rng(cfg.rng_seed);
  add_noise_inplace(out.samples, cfg.noise_rms, rng);
  return out;
}

}  // namespace dustnet
