#include "dustnet/signal_io.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "dustnet/dnwf.hpp"
#include "dustnet/errors.hpp"

namespace dustnet {
namespace {

Waveform load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  if (line.rfind("time", 0) != 0) throw FormatError(path.string() + ": expected a time,amplitude header");
  std::vector<double> t, v;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    double a = 0.0, b = 0.0;
    char comma = 0;
    if (!(ss >> a >> comma >> b) || comma != ',') {
      throw FormatError(path.string() + ": bad row at line " + std::to_string(lineno));
    }
    t.push_back(a);
    v.push_back(b);
  }
  if (t.size() < 2) throw FormatError(path.string() + ": need at least 2 samples");
  const double dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  if (!(dt > 0.0)) throw FormatError(path.string() + ": times must increase");
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (std::abs(t[i] - t[0] - dt * static_cast<double>(i)) > 1e-6 * dt + 1e-12) {
      throw FormatError(path.string() + ": times are not uniformly spaced");
    }
  }
  return Waveform(std::move(v), 1.0 / dt, t.front());
}

double blackman_sinc(double x, double cutoff, int half) {
  if (std::abs(x) >= half) return 0.0;
  const double arg = std::numbers::pi * cutoff * x;
  const double sinc = x == 0.0 ? 1.0 : std::sin(arg) / arg;
  const double r = x / half;
  const double w = 0.42 + 0.5 * std::cos(std::numbers::pi * r) + 0.08 * std::cos(2.0 * std::numbers::pi * r);
  return cutoff * sinc * w;
}

}  // namespace

Waveform load_signal(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".dnwf" || ext == ".DNWF") return read_dnwf(path);
  if (ext == ".csv" || ext == ".CSV") return load_csv(path);
  throw FormatError(path.string() + ": unsupported signal format (use .dnwf or .csv)");
}

std::vector<double> resample_windowed_sinc(const Waveform& in, double out_rate, double t_start, std::size_t n,
                                           int half_width) {
  if (!(out_rate > 0.0)) throw ConfigError("resample rate must be positive");
  std::vector<double> out(n, 0.0);
  if (in.empty()) return out;
  const double cutoff = std::min(1.0, out_rate / in.sample_rate);
  const int half = static_cast<int>(std::ceil(half_width / cutoff));
  const auto len = static_cast<std::int64_t>(in.size());
  for (std::size_t k = 0; k < n; ++k) {
    const double x = (t_start + static_cast<double>(k) / out_rate - in.t0) * in.sample_rate;
    const auto c = static_cast<std::int64_t>(std::floor(x));
    double acc = 0.0;
    for (std::int64_t i = std::max<std::int64_t>(0, c - half + 1); i <= std::min(len - 1, c + half); ++i) {
      acc += in.samples[static_cast<std::size_t>(i)] * blackman_sinc(x - static_cast<double>(i), cutoff, half);
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace dustnet
