#pragma once

#include <filesystem>
#include <vector>

#include "dustnet/waveform.hpp"

namespace dustnet {

/// Reads a DNWF file, or a CSV with a "time,amplitude" header and uniformly
/// spaced times. Throws FormatError.
Waveform load_signal(const std::filesystem::path& path);

/// `n` samples at `out_rate` starting at `t_start`, by Blackman-windowed sinc
/// interpolation with the cutoff lowered to the output Nyquist when
/// decimating. Outside the input span the signal is taken as zero.
std::vector<double> resample_windowed_sinc(const Waveform& in, double out_rate, double t_start, std::size_t n,
                                           int half_width = 16);

}  // namespace dustnet
