#include "dustnet/demod.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>

#include "dustnet/errors.hpp"
#include "dustnet/implant.hpp"

namespace dustnet {
namespace {

bool aligned(const Waveform& a, const Waveform& b) {
  return a.size() == b.size() && std::abs(a.sample_rate - b.sample_rate) <= 1e-9 * a.sample_rate &&
         std::abs(a.t0 - b.t0) <= 0.5 / a.sample_rate;
}

}  // namespace

std::vector<PulseSegment> segment_pulses(const Waveform& rec, std::span<const RxGate> gates, std::string* diagnostic) {
  std::vector<PulseSegment> out;
  const std::int64_t base = rec.grid_index();
  const auto n = static_cast<std::int64_t>(rec.size());
  bool energy = false;
  for (std::size_t g = 0; g < gates.size(); ++g) {
    const auto lo = std::llround(gates[g].open * rec.sample_rate) - base;
    const auto hi = std::llround(gates[g].close * rec.sample_rate) - base;
    if (lo < 0 || hi > n || hi <= lo) continue;
    PulseSegment s;
    s.index = static_cast<std::int64_t>(g);
    s.gate = gates[g];
    s.samples = Waveform(std::vector<double>(rec.samples.begin() + lo, rec.samples.begin() + hi), rec.sample_rate,
                         static_cast<double>(base + lo) / rec.sample_rate);
    energy = energy || s.samples.energy() > 0.0;
    out.push_back(std::move(s));
  }
  if (!energy) {
    if (diagnostic) {
      *diagnostic = out.empty() ? "recording covers no complete RX gate" : "no energy in any RX gate";
    }
    out.clear();
  }
  return out;
}

std::vector<PulseSegment> segment_pulses(const Waveform& rec, const FrameSchedule& schedule, double first_open,
                                         double gate_duration, std::string* diagnostic) {
  std::vector<RxGate> gates;
  for (double open = first_open; open + gate_duration <= rec.end_time() + 1e-12; open += schedule.pulse_period) {
    gates.push_back({open, open + gate_duration});
  }
  return segment_pulses(rec, gates, diagnostic);
}

Waveform highpass(const Waveform& seg, const DemodConfig& cfg) {
  const auto f = butterworth_highpass(cfg.hpf_order, cfg.hpf_corner, seg.sample_rate);
  // Reflect long enough for the start-up transient to decay before the data.
  const double tau = seg.sample_rate / (2.0 * M_PI * cfg.hpf_corner);
  const auto pad = static_cast<std::size_t>(std::ceil(static_cast<double>(cfg.hpf_order) * 1.5 * tau));
  return Waveform(filtfilt(f, seg.samples, pad), seg.sample_rate, seg.t0);
}

Waveform lowpass_envelope(const Waveform& env, const DemodConfig& cfg) {
  const auto f = cheby2_lowpass(cfg.lpf_order, cfg.lpf_stop_edge, cfg.lpf_atten_db, env.sample_rate);
  return Waveform(filtfilt(f, env.samples), env.sample_rate, env.t0);
}

Waveform combine_differential(const Waveform& pos, const Waveform& neg) {
  if (!aligned(pos, neg)) throw ConfigError("differential combining needs aligned traces");
  Waveform out = pos;
  for (std::size_t i = 0; i < out.size(); ++i) out.samples[i] -= neg.samples[i];
  return out;
}

SymbolFrame sample_symbols(const Waveform& env, const SymbolSchedule& s) {
  SymbolFrame f;
  f.echo_voltages.reserve(s.count);
  f.symbol_times.reserve(s.count);
  const double last = static_cast<double>(env.size()) - 1.0;
  for (std::size_t k = 0; k < s.count; ++k) {
    const double t = s.first_symbol_start + static_cast<double>(k + 1) * s.symbol_duration - s.settle_guard;
    const double x = (t - env.t0) * env.sample_rate;
    if (env.empty() || x < -1e-6 || x > last + 1e-6) {
      throw DomainError("symbol " + std::to_string(k) + " lies outside the envelope span");
    }
    const double xc = std::clamp(x, 0.0, last);
    const auto i = static_cast<std::size_t>(std::floor(xc));
    const double frac = xc - static_cast<double>(i);
    const double v = i + 1 < env.size() ? env.samples[i] * (1.0 - frac) + env.samples[i + 1] * frac : env.samples[i];
    f.echo_voltages.push_back(v);
    f.symbol_times.push_back(t);
  }
  return f;
}

EnvelopeTrace demodulate_envelope(const Waveform& segment, const DemodConfig& cfg) {
  EnvelopeTrace tr;
  const Waveform hp = highpass(segment, cfg);
  auto env = extract_envelope(hp, cfg.carrier_freq);
  tr.fallback = env.fallback;
  tr.diagnostic = env.diagnostic;
  tr.positive = lowpass_envelope(env.positive, cfg);
  tr.negative = lowpass_envelope(env.negative, cfg);
  tr.differential = combine_differential(tr.positive, tr.negative);
  return tr;
}

SymbolFrame demodulate_segment(const Waveform& segment, const DemodConfig& cfg, const SymbolSchedule& schedule) {
  return sample_symbols(demodulate_envelope(segment, cfg).differential, schedule);
}

std::vector<int> demap_levels(std::span<const double> v, std::span<const double> thresholds) {
  std::vector<int> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = demap_level(v[i], thresholds);
  return out;
}

BitVector levels_to_bits(std::span<const int> levels, int m) {
  BitVector bits;
  bits.reserve(levels.size() * static_cast<std::size_t>(m));
  for (int l : levels) append_bits(bits, static_cast<std::uint64_t>(l), m);
  return bits;
}

std::vector<std::uint32_t> bits_to_words(std::span<const std::uint8_t> bits, int word_bits) {
  std::vector<std::uint32_t> words;
  const auto w = static_cast<std::size_t>(word_bits);
  for (std::size_t pos = 0; pos + w <= bits.size(); pos += w) {
    words.push_back(static_cast<std::uint32_t>(read_bits(bits, pos, word_bits)));
  }
  return words;
}

BitVector words_to_bits(std::span<const std::uint32_t> words, int word_bits) {
  BitVector bits;
  bits.reserve(words.size() * static_cast<std::size_t>(word_bits));
  for (auto w : words) append_bits(bits, w, word_bits);
  return bits;
}

BitVector demap(const SymbolFrame& frame, std::span<const double> thresholds, const LinkConfig& cfg) {
  return levels_to_bits(demap_levels(frame.echo_voltages, thresholds), cfg.bits_per_symbol());
}

std::size_t ImplantDecode::words_received() const noexcept {
  std::size_t n = 0;
  for (const auto& p : packets) n += p.words.size();
  return n;
}

std::vector<ImplantDecode> decode_uplink(std::span<const PacketObservation> observations) {
  std::map<std::uint8_t, std::vector<const PacketObservation*>> by_id;
  for (const auto& o : observations) by_id[o.implant_id].push_back(&o);

  constexpr std::size_t kHeaderSymbols = kUplinkHeader.size() + kCountFieldBits;
  std::vector<ImplantDecode> result;
  for (const auto& [id, obs] : by_id) {
    ImplantDecode dec;
    dec.implant_id = id;
    for (const auto* o : obs) dec.packets.push_back(DecodedPacket{o->pulse_index, false, 0, 0, {}, {}});

    std::vector<double> pool;
    for (const auto* o : obs) {
      if (o->voltages.size() >= kHeaderSymbols) pool.insert(pool.end(), o->voltages.begin(), o->voltages.begin() + kHeaderSymbols);
    }
    if (pool.size() < 8) {
      dec.diagnostics.push_back("too few header symbols to cluster");
      result.push_back(std::move(dec));
      continue;
    }
    dec.header_clusters = cluster_thresholds(pool, 2);
    const auto& hc = dec.header_clusters;
    double ss = 0.0;
    for (double v : pool) {
      const double d = v - hc.centroids[static_cast<std::size_t>(demap_level(v, hc.thresholds))];
      ss += d * d;
    }
    const double spread = std::sqrt(ss / static_cast<double>(pool.size()));
    const double gap = hc.centroids[1] - hc.centroids[0];
    dec.header_separation = spread > 0.0 ? gap / spread : (gap > 0.0 ? INFINITY : 0.0);
    if (hc.fallback || dec.header_separation < kHeaderMinSeparation) {
      dec.diagnostics.push_back("header levels not separable; implant treated as silent");
      result.push_back(std::move(dec));
      continue;
    }

    const int levels = obs.front()->ask_levels;
    const int m = std::countr_zero(static_cast<unsigned>(levels));
    std::vector<double> data_pool;
    std::vector<std::size_t> n_data(obs.size(), 0);
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const auto* o = obs[i];
      auto& pkt = dec.packets[i];
      if (o->voltages.size() < kHeaderSymbols) continue;
      const auto hdr = demap_levels(std::span(o->voltages).first(kHeaderSymbols), hc.thresholds);
      for (std::size_t j = 0; j < kUplinkHeader.size(); ++j) pkt.header_errors += hdr[j] != kUplinkHeader[j];
      pkt.present = pkt.header_errors <= 1;
      if (!pkt.present) continue;
      int field = 0;
      for (std::size_t j = kUplinkHeader.size(); j < kHeaderSymbols; ++j) field = field * 2 + hdr[j];
      pkt.count = std::min(field + 1, o->max_words);
      const std::size_t syms = static_cast<std::size_t>(pkt.count) * static_cast<std::size_t>(o->word_bits / m);
      n_data[i] = std::min(syms, o->voltages.size() - kHeaderSymbols);
      data_pool.insert(data_pool.end(), o->voltages.begin() + kHeaderSymbols,
                       o->voltages.begin() + static_cast<std::ptrdiff_t>(kHeaderSymbols + n_data[i]));
    }

    // Levels on the I-DAC code grid between the header extremes.
    auto header_grid = [&] {
      ClusterResult g;
      for (int l = 0; l < levels; ++l) {
        g.centroids.push_back(hc.centroids[0] + gap * level_to_code(l, m) / static_cast<double>(kMaxIdacCode));
      }
      for (std::size_t l = 0; l + 1 < g.centroids.size(); ++l) {
        g.thresholds.push_back(0.5 * (g.centroids[l] + g.centroids[l + 1]));
      }
      return g;
    };
    if (data_pool.size() >= 4 * static_cast<std::size_t>(levels)) {
      dec.data_clusters = cluster_thresholds(data_pool, levels);
      const auto& dc = dec.data_clusters.centroids;
      double min_step = INFINITY;
      for (std::size_t l = 0; l + 1 < dc.size(); ++l) min_step = std::min(min_step, dc[l + 1] - dc[l]);
      if (!dec.data_clusters.fallback && min_step < kMinLevelStepFraction * gap / (levels - 1)) {
        dec.data_clusters.fallback = true;
        dec.data_clusters.diagnostic = "data clusters closer than the level grid allows";
      }
      if (dec.data_clusters.fallback) {
        dec.diagnostics.push_back(dec.data_clusters.diagnostic + "; thresholds from header levels");
        const auto counts = dec.data_clusters.counts;
        dec.data_clusters = header_grid();
        dec.data_clusters.fallback = true;
        dec.data_clusters.counts = counts;
      }
    } else {
      dec.diagnostics.push_back("too few data symbols to cluster; thresholds from header levels");
      dec.data_clusters = header_grid();
    }
    const auto& thresholds = dec.data_clusters.thresholds;

    for (std::size_t i = 0; i < obs.size(); ++i) {
      auto& pkt = dec.packets[i];
      if (!pkt.present) continue;
      const auto* o = obs[i];
      pkt.levels = demap_levels(std::span(o->voltages).subspan(kHeaderSymbols, n_data[i]), thresholds);
      pkt.words = bits_to_words(levels_to_bits(pkt.levels, m), o->word_bits);
    }
    result.push_back(std::move(dec));
  }
  return result;
}

}  // namespace dustnet
