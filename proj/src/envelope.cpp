#include "dustnet/envelope.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>

#include "dustnet/errors.hpp"

namespace dustnet {
namespace {

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

double end_slope(double h0, double h1, double d0, double d1) {
  double d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
  if (d * d0 <= 0.0) return 0.0;
  if (d0 * d1 < 0.0 && std::abs(d) > std::abs(3.0 * d0)) return 3.0 * d0;
  return d;
}

}  // namespace

std::vector<Extremum> track_extrema(const Waveform& w, double carrier_freq, bool maxima) {
  std::vector<Extremum> out;
  const auto n = static_cast<std::int64_t>(w.size());
  if (n < 3) return out;
  const double spc = w.sample_rate / carrier_freq;
  const auto& x = w.samples;
  auto better = [maxima](double a, double b) { return maxima ? a > b : a < b; };

  std::int64_t ref = 0;
  for (std::int64_t i = 1; i < n; ++i) {
    if (better(x[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(ref)])) ref = i;
  }
  const double phase = std::fmod(static_cast<double>(ref), spc);
  const double quarter = spc / 4.0;
  for (double c = phase; c < static_cast<double>(n); c += spc) {
    const auto lo = std::max<std::int64_t>(0, std::llround(c - quarter));
    const auto hi = std::min<std::int64_t>(n - 1, std::llround(c + quarter));
    if (hi - lo < 2) continue;
    std::int64_t best = lo;
    for (std::int64_t i = lo + 1; i <= hi; ++i) {
      if (better(x[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(best)])) best = i;
    }
    double pos = static_cast<double>(best);
    double val = x[static_cast<std::size_t>(best)];
    if (best > 0 && best < n - 1) {
      const double ym = x[static_cast<std::size_t>(best - 1)];
      const double y0 = val;
      const double yp = x[static_cast<std::size_t>(best + 1)];
      const double den = ym - 2.0 * y0 + yp;
      if (den != 0.0) {
        const double p = std::clamp(0.5 * (ym - yp) / den, -0.5, 0.5);
        pos += p;
        val = y0 - 0.25 * (ym - yp) * p;
      }
    }
    out.push_back({w.t0 + pos / w.sample_rate, val});
  }
  return out;
}

std::vector<double> pchip_eval(std::span<const double> xs, std::span<const double> ys, std::span<const double> xq) {
  const std::size_t n = xs.size();
  std::vector<double> out(xq.size());
  if (n == 0) return out;
  if (n == 1) {
    std::fill(out.begin(), out.end(), ys[0]);
    return out;
  }
  std::vector<double> h(n - 1), delta(n - 1), d(n);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    h[k] = xs[k + 1] - xs[k];
    delta[k] = (ys[k + 1] - ys[k]) / h[k];
  }
  if (n == 2) {
    d[0] = d[1] = delta[0];
  } else {
    for (std::size_t k = 1; k + 1 < n; ++k) {
      if (delta[k - 1] * delta[k] <= 0.0) {
        d[k] = 0.0;
      } else {
        const double w1 = 2.0 * h[k] + h[k - 1];
        const double w2 = h[k] + 2.0 * h[k - 1];
        d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
      }
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  }

  std::size_t k = 0;
  for (std::size_t q = 0; q < xq.size(); ++q) {
    const double t = xq[q];
    if (t <= xs[0]) {
      out[q] = ys[0];
      continue;
    }
    if (t >= xs[n - 1]) {
      out[q] = ys[n - 1];
      continue;
    }
    if (t < xs[k]) k = 0;
    while (k + 2 < n && t >= xs[k + 1]) ++k;
    const double s = (t - xs[k]) / h[k];
    const double s2 = s * s, s3 = s2 * s;
    out[q] = (2 * s3 - 3 * s2 + 1) * ys[k] + (s3 - 2 * s2 + s) * h[k] * d[k] + (-2 * s3 + 3 * s2) * ys[k + 1] +
             (s3 - s2) * h[k] * d[k + 1];
  }
  return out;
}

std::vector<double> analytic_magnitude(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  if (n == 0) return out;
  auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  fftw_plan fwd, inv;
  {
    std::lock_guard lock(fftw_planner_mutex());
    fwd = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    inv = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < n; ++i) {
    buf[i][0] = x[i];
    buf[i][1] = 0.0;
  }
  fftw_execute(fwd);
  for (std::size_t i = 1; i < n; ++i) {
    const bool nyquist = n % 2 == 0 && i == n / 2;
    const double g = i < (n + 1) / 2 ? 2.0 : (nyquist ? 1.0 : 0.0);
    buf[i][0] *= g;
    buf[i][1] *= g;
  }
  fftw_execute(inv);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::hypot(buf[i][0], buf[i][1]) / static_cast<double>(n);
  }
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }
  fftw_free(buf);
  return out;
}

EnvelopePair extract_envelope(const Waveform& segment, double carrier_freq) {
  if (!(carrier_freq > 0.0)) throw DomainError("carrier frequency must be positive");
  if (segment.duration() * carrier_freq < 3.0 - 1e-9) {
    throw DomainError("envelope extraction needs at least 3 carrier cycles");
  }
  EnvelopePair env;
  const auto peaks = track_extrema(segment, carrier_freq, true);
  const auto valleys = track_extrema(segment, carrier_freq, false);
  if (peaks.size() < 4 || valleys.size() < 4) {
    const auto mag = analytic_magnitude(segment.samples);
    env.positive = Waveform(mag, segment.sample_rate, segment.t0);
    env.negative = Waveform(mag, segment.sample_rate, segment.t0);
    for (double& v : env.negative.samples) v = -v;
    env.fallback = true;
    env.diagnostic = "fewer than 4 carrier peaks; analytic-signal envelope used";
    return env;
  }
  std::vector<double> grid(segment.size());
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = segment.time_at(i);
  auto interp = [&](const std::vector<Extremum>& pts) {
    std::vector<double> xs, ys;
    xs.reserve(pts.size());
    ys.reserve(pts.size());
    for (const auto& p : pts) {
      if (!xs.empty() && p.t <= xs.back()) continue;
      xs.push_back(p.t);
      ys.push_back(p.v);
    }
    return Waveform(pchip_eval(xs, ys, grid), segment.sample_rate, segment.t0);
  };
  env.positive = interp(peaks);
  env.negative = interp(valleys);
  return env;
}

}  // namespace dustnet
