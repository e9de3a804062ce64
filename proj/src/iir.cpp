#include "dustnet/iir.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "dustnet/errors.hpp"

namespace dustnet {
namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

struct Zpk {
  std::vector<cplx> zeros, poles;
  double gain = 1.0;
};

void check_design(int order, double corner, double fs) {
  if (order < 1) throw ConfigError("filter order must be positive");
  if (!(fs > 0.0)) throw ConfigError("filter sample rate must be positive");
  if (!(corner > 0.0) || corner >= fs / 2.0) throw ConfigError("filter corner must lie below Nyquist");
}

double prewarp(double corner, double fs) { return 2.0 * fs * std::tan(kPi * corner / fs); }

std::vector<cplx> butter_prototype_poles(int n) {
  std::vector<cplx> p;
  for (int k = 0; k < n; ++k) {
    const double theta = kPi * (2.0 * k + n + 1) / (2.0 * n);
    p.push_back(std::polar(1.0, theta));
  }
  return p;
}

/// Analog zpk -> digital zpk via s = 2 fs (z - 1) / (z + 1). Zeros at
/// infinity map to z = -1. Gain is fixed afterwards by normalization.
Zpk bilinear(const Zpk& a, double fs) {
  Zpk d;
  const double k = 2.0 * fs;
  for (auto z : a.zeros) d.zeros.push_back((k + z) / (k - z));
  for (auto p : a.poles) d.poles.push_back((k + p) / (k - p));
  while (d.zeros.size() < d.poles.size()) d.zeros.emplace_back(-1.0, 0.0);
  return d;
}

/// Groups conjugate pairs (and leftover reals) into biquads, then scales so
/// the response at `norm_freq` has unit magnitude.
SosFilter to_sos(const Zpk& d, double fs, double norm_freq) {
  auto pair_up = [](std::vector<cplx> roots) {
    std::vector<std::pair<cplx, cplx>> pairs;
    std::vector<cplx> reals;
    std::sort(roots.begin(), roots.end(), [](cplx a, cplx b) { return a.imag() > b.imag(); });
    std::vector<bool> used(roots.size(), false);
    for (std::size_t i = 0; i < roots.size(); ++i) {
      if (used[i]) continue;
      if (std::abs(roots[i].imag()) < 1e-12) {
        reals.push_back(roots[i]);
        used[i] = true;
        continue;
      }
      std::size_t best = i;
      double best_d = INFINITY;
      for (std::size_t j = 0; j < roots.size(); ++j) {
        if (j == i || used[j]) continue;
        const double dist = std::abs(roots[j] - std::conj(roots[i]));
        if (dist < best_d) {
          best_d = dist;
          best = j;
        }
      }
      used[i] = used[best] = true;
      pairs.emplace_back(roots[i], std::conj(roots[i]));
    }
    std::sort(reals.begin(), reals.end(), [](cplx a, cplx b) { return a.real() < b.real(); });
    for (std::size_t i = 0; i + 1 < reals.size(); i += 2) pairs.emplace_back(reals[i], reals[i + 1]);
    if (reals.size() % 2 == 1) pairs.emplace_back(reals.back(), cplx(0.0, 0.0));
    return pairs;
  };
  auto zp = pair_up(d.zeros);
  auto pp = pair_up(d.poles);
  // A lone real root is paired with one at the origin, i.e. a first-order section.
  SosFilter f;
  f.sample_rate = fs;
  for (std::size_t i = 0; i < pp.size(); ++i) {
    Biquad q;
    const auto [z1, z2] = i < zp.size() ? zp[i] : std::pair<cplx, cplx>{cplx(0), cplx(0)};
    const auto [p1, p2] = pp[i];
    q.b0 = 1.0;
    q.b1 = -(z1 + z2).real();
    q.b2 = (z1 * z2).real();
    q.a1 = -(p1 + p2).real();
    q.a2 = (p1 * p2).real();
    f.sections.push_back(q);
  }
  const double g = 1.0 / f.magnitude(norm_freq);
  f.sections.front().b0 *= g;
  f.sections.front().b1 *= g;
  f.sections.front().b2 *= g;
  return f;
}

/// Steady-state DF2T state of each section for a constant input of 1.
std::vector<std::array<double, 2>> step_state(const SosFilter& f) {
  std::vector<std::array<double, 2>> zi;
  double x = 1.0;
  for (const auto& s : f.sections) {
    const double g = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double y = g * x;
    const double z2 = s.b2 * x - s.a2 * y;
    const double z1 = y - s.b0 * x;
    zi.push_back({z1, z2});
    x = y;
  }
  return zi;
}

void run(const SosFilter& f, std::vector<double>& x, std::vector<std::array<double, 2>> state) {
  for (std::size_t k = 0; k < f.sections.size(); ++k) {
    const auto& s = f.sections[k];
    double z1 = state[k][0], z2 = state[k][1];
    for (double& v : x) {
      const double in = v;
      const double y = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * y + z2;
      z2 = s.b2 * in - s.a2 * y;
      v = y;
    }
  }
}

}  // namespace

std::complex<double> SosFilter::response(double f) const {
  const cplx z = std::polar(1.0, 2.0 * kPi * f / sample_rate);
  const cplx zi = 1.0 / z;
  cplx h(1.0, 0.0);
  for (const auto& s : sections) {
    h *= (s.b0 + s.b1 * zi + s.b2 * zi * zi) / (1.0 + s.a1 * zi + s.a2 * zi * zi);
  }
  return h;
}

double SosFilter::magnitude_db(double f) const { return 20.0 * std::log10(magnitude(f)); }

SosFilter butterworth_highpass(int order, double corner, double fs) {
  check_design(order, corner, fs);
  const double wc = prewarp(corner, fs);
  Zpk a;
  for (auto p : butter_prototype_poles(order)) a.poles.push_back(wc / p);
  a.zeros.assign(static_cast<std::size_t>(order), cplx(0.0, 0.0));
  return to_sos(bilinear(a, fs), fs, fs / 2.0);
}

SosFilter butterworth_lowpass(int order, double corner, double fs) {
  check_design(order, corner, fs);
  const double wc = prewarp(corner, fs);
  Zpk a;
  for (auto p : butter_prototype_poles(order)) a.poles.push_back(wc * p);
  return to_sos(bilinear(a, fs), fs, 0.0);
}

SosFilter cheby2_lowpass(int order, double stop_edge, double atten_db, double fs) {
  check_design(order, stop_edge, fs);
  if (!(atten_db > 0.0)) throw ConfigError("stopband attenuation must be positive");
  const double ws = prewarp(stop_edge, fs);
  const double eps = 1.0 / std::sqrt(std::pow(10.0, atten_db / 10.0) - 1.0);
  const double mu = std::asinh(1.0 / eps) / order;
  Zpk a;
  for (int k = 1; k <= order; ++k) {
    const double theta = kPi * (2.0 * k - 1) / (2.0 * order);
    // Chebyshev I prototype pole, inverted for the Type 2 response.
    const cplx p1(-std::sinh(mu) * std::sin(theta), std::cosh(mu) * std::cos(theta));
    a.poles.push_back(ws / p1);
    const double c = std::cos(theta);
    if (std::abs(c) > 1e-12) a.zeros.emplace_back(0.0, ws / c);
  }
  return to_sos(bilinear(a, fs), fs, 0.0);
}

std::vector<double> sosfilt(const SosFilter& f, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  run(f, y, std::vector<std::array<double, 2>>(f.sections.size(), {0.0, 0.0}));
  return y;
}

std::vector<double> filtfilt(const SosFilter& f, std::span<const double> x) {
  return filtfilt(f, x, 3 * (2 * f.sections.size() + 1));
}

std::vector<double> filtfilt(const SosFilter& f, std::span<const double> x, std::size_t pad_len) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  const std::size_t pad = std::min<std::size_t>(pad_len, n - 1);
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const auto zi = step_state(f);
  auto scaled = [&](double v) {
    auto s = zi;
    for (auto& z : s) {
      z[0] *= v;
      z[1] *= v;
    }
    return s;
  };
  run(f, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  run(f, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                             ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

}  // namespace dustnet
