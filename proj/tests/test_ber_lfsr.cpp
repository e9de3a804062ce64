#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "dustnet/ber.hpp"
#include "dustnet/demod.hpp"
#include "dustnet/errors.hpp"
#include "dustnet/lfsr.hpp"
#include "dustnet/rng.hpp"

using namespace dustnet;

namespace {

// Words of the PRBS as the implant produces them, each split into a packet.
std::vector<BitVector> packetize(std::uint16_t seed, int word_bits, int words_per_packet, int packets,
                                 const std::vector<int>& drop_after = {}) {
  Lfsr16 g(seed);
  std::vector<BitVector> out;
  for (int p = 0; p < packets; ++p) {
    std::vector<std::uint32_t> words;
    for (int w = 0; w < words_per_packet; ++w) words.push_back(g.next_word(word_bits));
    out.push_back(words_to_bits(words, word_bits));
    if (std::find(drop_after.begin(), drop_after.end(), p) != drop_after.end()) g.next_word(word_bits);
  }
  return out;
}

}  // namespace

TEST_CASE("LFSR period is maximal") {
  for (std::uint16_t seed : {std::uint16_t{1}, std::uint16_t{0x2B}, std::uint16_t{0xFFFF}}) {
    std::uint16_t s = seed;
    std::uint32_t steps = 0;
    do {
      s = lfsr_step(s).state;
      ++steps;
      REQUIRE(s != 0);
    } while (s != seed && steps <= kLfsrPeriod);
    CHECK(steps == kLfsrPeriod);
  }
}

TEST_CASE("first step from seed 1") {
  const auto st = lfsr_step(0x0001);
  CHECK(st.bit == 1);
  CHECK(st.state == 0x8000);  // feedback 1 enters at bit 15
  CHECK_THROWS_AS(lfsr_step(0), DomainError);
  CHECK_THROWS_AS(Lfsr16(0), DomainError);
}

TEST_CASE("one period is balanced") {
  const auto bits = lfsr_sequence(0x1234 | 1, kLfsrPeriod);
  const auto ones = std::count(bits.begin(), bits.end(), 1);
  CHECK(ones == 32768);
  CHECK(static_cast<long>(bits.size()) - ones == 32767);
}

TEST_CASE("words are packed MSB first") {
  Lfsr16 a(0x55), b(0x55);
  const auto w = a.next_word(9);
  std::uint32_t expect = 0;
  for (int i = 0; i < 9; ++i) expect = (expect << 1) | b.next_bit();
  CHECK(w == expect);
  CHECK(a.state() == b.state());
  CHECK(lfsr_seed_for(0x2A) == 0x2B);
  CHECK(lfsr_seed_for(0x2B) == 0x2B);
  CHECK(lfsr_seed_for(0) == 1);
}

TEST_CASE("identical streams have no errors") {
  const auto bits = lfsr_sequence(7, 10000);
  const auto r = compute_ber(bits, 7);
  CHECK(r.synced);
  CHECK(r.bit_errors == 0u);
  CHECK(r.bits_compared == 10000u);
  CHECK(r.ber_upper_bound == doctest::Approx(1e-4));
  CHECK(r.alignment_offset == 0);
}

TEST_CASE("seven flipped bits are counted exactly") {
  auto bits = lfsr_sequence(7, 10000);
  for (std::size_t i : {3u, 100u, 101u, 2500u, 5000u, 7777u, 9999u}) bits[i] ^= 1U;
  const auto r = compute_ber(bits, 7, 4);
  CHECK(r.bit_errors == 7u);
  CHECK(r.ber_point == doctest::Approx(7e-4));
  CHECK(r.ber_upper_bound == r.ber_point);
}

TEST_CASE("zero errors over 52928 bits bound the BER at 1.89e-5") {
  const auto bits = lfsr_sequence(3, 52928);
  const auto r = compute_ber(bits, 3);
  CHECK(r.bit_errors == 0u);
  CHECK(r.ber_point == 0.0);
  CHECK(r.ber_upper_bound == doctest::Approx(1.89e-5).epsilon(0.001));
}

TEST_CASE("alignment finds an arbitrary starting phase") {
  const auto full = lfsr_sequence(9, 20000);
  const BitVector tail(full.begin() + 12345, full.end());
  const auto r = compute_ber(tail, 9);
  CHECK(r.synced);
  CHECK(r.alignment_offset == 12345);
  CHECK(r.bit_errors == 0u);
}

TEST_CASE("unrelated data is a sync failure, not bit errors") {
  Rng rng(1);
  BitVector junk(4000);
  for (auto& b : junk) b = static_cast<std::uint8_t>(rng() & 1U);
  const auto r = compute_ber(junk, 9);
  CHECK_FALSE(r.synced);
  CHECK(r.sync_failures == 1u);
  CHECK(r.bit_errors == 0u);
  CHECK(r.bits_compared == 0u);
}

TEST_CASE("confusion matrix counts symbols") {
  const auto bits = lfsr_sequence(5, 4000);
  const auto r = compute_ber(bits, 5, 4);
  REQUIRE(r.per_level_confusion.size() == 16u);
  std::uint64_t total = 0, diag = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    REQUIRE(r.per_level_confusion[i].size() == 16u);
    total += std::accumulate(r.per_level_confusion[i].begin(), r.per_level_confusion[i].end(), std::uint64_t{0});
    diag += r.per_level_confusion[i][i];
  }
  CHECK(total == 1000u);
  CHECK(diag == total);
}

TEST_CASE("per-packet alignment survives dropped words") {
  const auto pkts = packetize(0x2B, 8, 12, 50, {10, 30, 31});
  const auto r = compute_ber_packets(pkts, 0x2B, 4, 8);
  CHECK(r.bit_errors == 0u);
  CHECK(r.sync_failures == 0u);
  CHECK(r.packets_compared == 50u);
  CHECK(r.bits_compared == 50u * 96u);
}

TEST_CASE("a corrupted packet is a sync failure and the stream recovers") {
  auto pkts = packetize(0x11, 9, 5, 20);
  Rng rng(4);
  for (auto& b : pkts[7]) b = static_cast<std::uint8_t>(rng() & 1U);
  pkts[12][3] ^= 1U;
  const auto r = compute_ber_packets(pkts, 0x11, 3, 9);
  CHECK(r.sync_failures == 1u);
  CHECK(r.packets_compared == 19u);
  CHECK(r.bit_errors == 1u);
}

TEST_CASE("report invariants and serialization") {
  auto bits = lfsr_sequence(5, 3000);
  bits[10] ^= 1U;
  auto r = compute_ber(bits, 5);
  CHECK(r.bit_errors <= r.bits_compared);
  CHECK(r.ber_upper_bound >= r.ber_point);
  const auto j = r.to_json();
  CHECK(j.at("bits_compared") == 3000);
  CHECK(j.at("bit_errors") == 1);

  BERReport total;
  total.reset_confusion(1);
  total.merge(r);
  total.merge(compute_ber(lfsr_sequence(5, 1000), 5));
  total.finalize();
  CHECK(total.bits_compared == 4000u);
  CHECK(total.bit_errors == 1u);
  CHECK(total.ber_point == doctest::Approx(1.0 / 4000.0));
}

TEST_CASE("packets shorter than the sync window ahead of the first lock are aligned backwards") {
  Lfsr16 g(0x21);
  std::vector<BitVector> pkts;
  pkts.push_back(words_to_bits(std::vector<std::uint32_t>{g.next_word(8)}, 8));
  pkts.push_back(words_to_bits(std::vector<std::uint32_t>{g.next_word(8), g.next_word(8)}, 8));
  for (int p = 0; p < 5; ++p) {
    std::vector<std::uint32_t> w;
    for (int i = 0; i < 12; ++i) w.push_back(g.next_word(8));
    pkts.push_back(words_to_bits(w, 8));
  }
  const auto r = compute_ber_packets(pkts, 0x21, 4, 8);
  CHECK(r.sync_failures == 0u);
  CHECK(r.packets_compared == 7u);
  CHECK(r.bits_compared == 24u + 5u * 96u);
  CHECK(r.alignment_offset == 0);
}
