#include "dustnet/ber.hpp"

#include <bit>

#include "dustnet/lfsr.hpp"

namespace dustnet {
namespace {

constexpr std::size_t kMaxSyncAttempts = 256;
constexpr std::size_t kPacketSyncAttempts = 4;

std::uint32_t pack_window(std::span<const std::uint8_t> bits, std::size_t pos) {
  std::uint32_t w = 0;
  for (std::size_t i = 0; i < kSyncWindowBits; ++i) w = (w << 1) | (bits[pos + i] & 1U);
  return w;
}

void add_confusion(BERReport& r, const LfsrReference& ref, std::span<const std::uint8_t> bits, std::int64_t phase) {
  const int m = r.bits_per_symbol;
  const auto ms = static_cast<std::size_t>(m);
  for (std::size_t s = 0; s + ms <= bits.size(); s += ms) {
    unsigned sent = 0, got = 0;
    for (std::size_t b = 0; b < ms; ++b) {
      sent = (sent << 1) | ref.at(phase + static_cast<std::int64_t>(s + b));
      got = (got << 1) | (bits[s + b] & 1U);
    }
    ++r.per_level_confusion[sent][got];
  }
}

}  // namespace

void BERReport::reset_confusion(int m) {
  bits_per_symbol = m;
  const std::size_t n = std::size_t{1} << m;
  per_level_confusion.assign(n, std::vector<std::uint64_t>(n, 0));
}

void BERReport::finalize() noexcept {
  ber_point = bits_compared ? static_cast<double>(bit_errors) / static_cast<double>(bits_compared) : 0.0;
  if (bits_compared == 0) {
    ber_upper_bound = 1.0;
  } else if (bit_errors == 0) {
    ber_upper_bound = 1.0 / static_cast<double>(bits_compared);
  } else {
    ber_upper_bound = ber_point;
  }
}

void BERReport::merge(const BERReport& o) {
  if (per_level_confusion.empty()) reset_confusion(o.bits_per_symbol);
  bits_compared += o.bits_compared;
  bit_errors += o.bit_errors;
  sync_failures += o.sync_failures;
  packets_compared += o.packets_compared;
  synced = synced || o.synced;
  if (alignment_offset < 0) alignment_offset = o.alignment_offset;
  if (o.per_level_confusion.size() == per_level_confusion.size()) {
    for (std::size_t i = 0; i < per_level_confusion.size(); ++i) {
      for (std::size_t j = 0; j < per_level_confusion.size(); ++j) per_level_confusion[i][j] += o.per_level_confusion[i][j];
    }
  }
  finalize();
}

nlohmann::json BERReport::to_json() const {
  return {{"bits_compared", bits_compared},   {"bit_errors", bit_errors},
          {"ber_point", ber_point},           {"ber_upper_bound", ber_upper_bound},
          {"bits_per_symbol", bits_per_symbol}, {"synced", synced},
          {"sync_failures", sync_failures},   {"packets_compared", packets_compared},
          {"alignment_offset", alignment_offset}, {"per_level_confusion", per_level_confusion}};
}

LfsrReference::LfsrReference(std::uint16_t seed) : bits_(lfsr_sequence(seed, kLfsrPeriod)) {
  const std::size_t p = bits_.size();
  windows_.resize(p);
  std::uint32_t w = 0;
  for (std::size_t i = 0; i < kSyncWindowBits; ++i) w = (w << 1) | bits_[i];
  for (std::size_t i = 0; i < p; ++i) {
    windows_[i] = w;
    w = (w << 1) | bits_[(i + kSyncWindowBits) % p];
  }
}

std::uint8_t LfsrReference::at(std::int64_t phase) const noexcept {
  const auto p = static_cast<std::int64_t>(bits_.size());
  return bits_[static_cast<std::size_t>(((phase % p) + p) % p)];
}

std::optional<std::int64_t> LfsrReference::sync(std::span<const std::uint8_t> bits, std::size_t pos) const {
  if (pos + kSyncWindowBits > bits.size()) return std::nullopt;
  const std::uint32_t rx = pack_window(bits, pos);
  const int max_errors = static_cast<int>((1.0 - kSyncCorrelation) / 2.0 * kSyncWindowBits);
  int best_err = static_cast<int>(kSyncWindowBits) + 1;
  std::int64_t best = -1;
  for (std::size_t p = 0; p < windows_.size(); ++p) {
    const int e = std::popcount(rx ^ windows_[p]);
    if (e < best_err) {
      best_err = e;
      best = static_cast<std::int64_t>(p);
      if (e == 0) break;
    }
  }
  if (best < 0 || best_err > max_errors) return std::nullopt;
  return best;
}

std::uint64_t LfsrReference::errors_at(std::span<const std::uint8_t> bits, std::int64_t phase) const noexcept {
  std::uint64_t e = 0;
  for (std::size_t i = 0; i < bits.size(); ++i) e += (bits[i] & 1U) != at(phase + static_cast<std::int64_t>(i));
  return e;
}

BERReport compute_ber(std::span<const std::uint8_t> received, std::uint16_t seed, int bits_per_symbol) {
  BERReport r;
  r.reset_confusion(bits_per_symbol);
  const LfsrReference ref(seed);
  for (std::size_t pos = 0; pos + kSyncWindowBits <= received.size() && pos < kMaxSyncAttempts; ++pos) {
    if (auto phase = ref.sync(received, pos)) {
      const std::int64_t start = *phase - static_cast<std::int64_t>(pos);
      r.synced = true;
      r.alignment_offset = ((start % kLfsrPeriod) + kLfsrPeriod) % kLfsrPeriod;
      r.bits_compared = received.size();
      r.bit_errors = ref.errors_at(received, start);
      r.packets_compared = 1;
      add_confusion(r, ref, received, start);
      break;
    }
  }
  if (!r.synced) r.sync_failures = 1;
  r.finalize();
  return r;
}

BERReport compute_ber_packets(std::span<const BitVector> packets, std::uint16_t seed, int bits_per_symbol,
                              int word_bits) {
  BERReport r;
  r.reset_confusion(bits_per_symbol);
  const LfsrReference ref(seed);

  struct Match {
    std::int64_t phase;
    std::uint64_t errors;
  };
  auto acceptable = [](std::uint64_t errors, std::size_t n) {
    return static_cast<double>(errors) <= kPacketAcceptErrorFraction * static_cast<double>(n);
  };
  // Best phase within +-32 words of `expected`; the expected phase wins ties.
  auto near = [&](const BitVector& pkt, std::int64_t expected) -> std::optional<Match> {
    Match best{expected, ref.errors_at(pkt, expected)};
    for (int k = -kRealignSearchWords; k <= kRealignSearchWords && best.errors > 0; ++k) {
      if (k == 0) continue;
      const std::int64_t cand = expected + static_cast<std::int64_t>(k) * word_bits;
      const auto e = ref.errors_at(pkt, cand);
      if (e < best.errors) best = {cand, e};
    }
    if (!acceptable(best.errors, pkt.size())) return std::nullopt;
    return best;
  };
  auto fresh = [&](const BitVector& pkt) -> std::optional<Match> {
    for (std::size_t pos = 0; pos + kSyncWindowBits <= pkt.size() && pos < kPacketSyncAttempts; ++pos) {
      if (auto p = ref.sync(pkt, pos)) {
        const std::int64_t start = *p - static_cast<std::int64_t>(pos);
        const auto e = ref.errors_at(pkt, start);
        if (acceptable(e, pkt.size())) return Match{start, e};
      }
    }
    return std::nullopt;
  };
  std::optional<std::int64_t> first_phase;
  auto count = [&](const BitVector& pkt, const Match& m) {
    r.bits_compared += pkt.size();
    r.bit_errors += m.errors;
    ++r.packets_compared;
    add_confusion(r, ref, pkt, m.phase);
    if (!first_phase || m.phase < *first_phase) first_phase = m.phase;
  };

  // Packets before the first lock (too short to correlate) are aligned
  // backwards from it.
  std::vector<const BitVector*> pending;
  std::optional<std::int64_t> expected;
  for (const auto& pkt : packets) {
    if (pkt.empty()) continue;
    std::optional<Match> m;
    if (expected) m = near(pkt, *expected);
    if (!m) m = fresh(pkt);
    if (!m) {
      if (expected) {
        ++r.sync_failures;
      } else {
        pending.push_back(&pkt);
      }
      continue;
    }
    if (!expected) {
      std::int64_t back = m->phase;
      for (auto it = pending.rbegin(); it != pending.rend(); ++it) {
        const auto& early = **it;
        if (auto e = near(early, back - static_cast<std::int64_t>(early.size()))) {
          count(early, *e);
          back = e->phase;
        } else {
          ++r.sync_failures;
        }
      }
      pending.clear();
    }
    count(pkt, *m);
    expected = m->phase + static_cast<std::int64_t>(pkt.size());
  }
  r.sync_failures += pending.size();
  if (first_phase) {
    r.synced = true;
    r.alignment_offset = ((*first_phase % kLfsrPeriod) + kLfsrPeriod) % kLfsrPeriod;
  }
  r.finalize();
  return r;
}

}  // namespace dustnet
