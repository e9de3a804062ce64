#include "dustnet/dnwf.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <vector>

#include "dustnet/errors.hpp"

namespace dustnet {
namespace {

template <typename T>
void put_le(std::ofstream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <typename T>
T get_le(const char* p) {
  std::array<char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

void write_header(std::ofstream& out, double rate, double t0, std::uint64_t count) {
  out.write("DNWF", 4);
  put_le<std::uint16_t>(out, kDnwfVersion);
  put_le<double>(out, rate);
  put_le<double>(out, t0);
  put_le<std::uint64_t>(out, count);
}

void write_samples(std::ofstream& out, std::span<const double> samples) {
  std::vector<char> buf(samples.size() * 4);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto v = static_cast<float>(samples[i]);
    auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) buf[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

}  // namespace

void write_dnwf(const std::filesystem::path& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_header(out, w.sample_rate, w.t0, w.samples.size());
  write_samples(out, w.samples);
  if (!out) throw FormatError("write failed: " + path.string());
}

Waveform read_dnwf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::array<char, kDnwfHeaderBytes> header{};
  in.read(header.data(), header.size());
  if (in.gcount() != static_cast<std::streamsize>(header.size())) {
    throw FormatError(path.string() + ": truncated DNWF header");
  }
  if (std::memcmp(header.data(), "DNWF", 4) != 0) throw FormatError(path.string() + ": bad DNWF magic");
  auto version = get_le<std::uint16_t>(header.data() + 4);
  if (version != kDnwfVersion) {
    throw FormatError(path.string() + ": unsupported DNWF version " + std::to_string(version));
  }
  Waveform w;
  w.sample_rate = get_le<double>(header.data() + 6);
  w.t0 = get_le<double>(header.data() + 14);
  auto count = get_le<std::uint64_t>(header.data() + 22);
  std::vector<char> body(count * 4);
  in.read(body.data(), static_cast<std::streamsize>(body.size()));
  if (static_cast<std::uint64_t>(in.gcount()) != body.size()) {
    throw FormatError(path.string() + ": truncated DNWF body");
  }
  w.samples.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    w.samples[i] = static_cast<double>(get_le<float>(body.data() + i * 4));
  }
  if (!(w.sample_rate > 0.0)) throw FormatError(path.string() + ": non-positive sample rate");
  return w;
}

DnwfWriter::DnwfWriter(const std::filesystem::path& path, double sample_rate, double t0,
                       std::uint64_t count)
    : out_(path, std::ios::binary | std::ios::trunc), count_(count) {
  if (!out_) throw FormatError("cannot open " + path.string() + " for writing");
  write_header(out_, sample_rate, t0, count);
}

DnwfWriter::~DnwfWriter() {
  try {
    close();
  } catch (...) {
  }
}

void DnwfWriter::pad_to(std::uint64_t offset) {
  static const std::vector<double> zeros(4096, 0.0);
  while (written_ < offset) {
    auto n = std::min<std::uint64_t>(zeros.size(), offset - written_);
    write_samples(out_, std::span<const double>(zeros.data(), n));
    written_ += n;
  }
}

void DnwfWriter::write_at(std::uint64_t offset, std::span<const double> samples) {
  if (closed_) throw FormatError("DNWF writer already closed");
  if (offset < written_) {
    auto skip = std::min<std::uint64_t>(written_ - offset, samples.size());
    samples = samples.subspan(skip);
    offset += skip;
  }
  if (offset >= count_) return;
  pad_to(offset);
  auto n = std::min<std::uint64_t>(samples.size(), count_ - offset);
  write_samples(out_, samples.first(n));
  written_ += n;
}

void DnwfWriter::close() {
  if (closed_) return;
  pad_to(count_);
  out_.flush();
  closed_ = true;
  if (!out_) throw FormatError("DNWF write failed");
}

void write_waveform_csv(const std::filesystem::path& path, const Waveform& w) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << "time,amplitude\n";
  char line[64];
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    std::snprintf(line, sizeof line, "%.12e,%.9e\n", w.time_at(i), w.samples[i]);
    out << line;
  }
}

}  // namespace dustnet
