#include "shuttlesim/fft.hpp"

#include <cmath>

#include "shuttlesim/errors.hpp"
#include "shuttlesim/units.hpp"

namespace shuttlesim {

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

void fft_inplace(std::vector<std::complex<double>>& data, bool inverse) {
    const std::size_t n = data.size();
    require(n != 0 && (n & (n - 1)) == 0, Errc::invalid_params, "fft size must be a power of two");

    // Bit-reversal permutation.
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i], data[j]);
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = data[i + k];
                const std::complex<double> v = data[i + k + len / 2] * w;
                data[i + k] = u + v;
                data[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& x : data) x *= inv;
    }
}

std::vector<std::complex<double>> fft_real(const std::vector<double>& v, std::size_t padded) {
    require(padded >= v.size(), Errc::invalid_params, "fft_real: padded size too small");
    std::vector<std::complex<double>> data(next_pow2(padded));
    for (std::size_t i = 0; i < v.size(); ++i) data[i] = v[i];
    fft_inplace(data);
    return data;
}

} // namespace shuttlesim
