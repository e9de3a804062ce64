#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>

#include "dustnet/waveform.hpp"

namespace dustnet {

// DNWF layout, all little-endian:
//   'D' 'N' 'W' 'F' | u16 version | f64 sample_rate | f64 t0 | u64 count | count x f32
inline constexpr std::uint16_t kDnwfVersion = 1;
inline constexpr std::size_t kDnwfHeaderBytes = 4 + 2 + 8 + 8 + 8;

void write_dnwf(const std::filesystem::path& path, const Waveform& w);
Waveform read_dnwf(const std::filesystem::path& path);

/// Streams a DNWF file whose total sample count is known up front.
/// Samples not written explicitly before close() are zero-filled.
class DnwfWriter {
 public:
  DnwfWriter(const std::filesystem::path& path, double sample_rate, double t0, std::uint64_t count);
  DnwfWriter(const DnwfWriter&) = delete;
  DnwfWriter& operator=(const DnwfWriter&) = delete;
  ~DnwfWriter();

  /// Writes `samples` starting at absolute sample offset `offset`. Offsets must
  /// be non-decreasing across calls; the gap is zero-filled. Samples beyond the
  /// declared count are dropped.
  void write_at(std::uint64_t offset, std::span<const double> samples);
  void close();

 private:
  void pad_to(std::uint64_t offset);

  std::ofstream out_;
  std::uint64_t count_ = 0;
  std::uint64_t written_ = 0;
  bool closed_ = false;
};

/// "time,amplitude" CSV, one row per sample.
void write_waveform_csv(const std::filesystem::path& path, const Waveform& w);

}  // namespace dustnet
