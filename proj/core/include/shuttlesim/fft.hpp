#pragma once

#include <complex>
#include <vector>

namespace shuttlesim {

// Iterative radix-2 Cooley-Tukey FFT. Deterministic across platforms (no
// runtime dispatch), which keeps persisted spectra byte-identical. Input size
// must be a power of two; callers zero-pad.

std::size_t next_pow2(std::size_t n);

void fft_inplace(std::vector<std::complex<double>>& data, bool inverse = false);

// Forward FFT of a real sequence zero-padded to `padded` (>= v.size(), power
// of two). Returns full complex spectrum of length `padded`.
std::vector<std::complex<double>> fft_real(const std::vector<double>& v, std::size_t padded);

} // namespace shuttlesim
