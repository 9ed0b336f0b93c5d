#include "shuttlesim/rng.hpp"

#include <cmath>

#include "shuttlesim/errors.hpp"
#include "shuttlesim/units.hpp"

namespace shuttlesim {

uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

uint64_t derive_stream_seed(uint64_t master, uint64_t index) {
    // Two finalizer rounds over (master, index); avalanches even for small
    // master seeds and consecutive indices.
    uint64_t s = master ^ 0xA0761D6478BD642FULL;
    (void)splitmix64(s);
    s ^= index * 0x8EBC6AF09C88C6E3ULL + 0x589965CC75374CC3ULL;
    uint64_t out = splitmix64(s);
    out ^= splitmix64(s);
    return out;
}

namespace {
inline uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
} // namespace

RandomStream::RandomStream(uint64_t seed) {
    // Seed expansion via splitmix64, as recommended for xoshiro256++.
    uint64_t s = seed;
    for (auto& w : s_) w = splitmix64(s);
    // All-zero state is invalid for xoshiro; splitmix64 cannot produce four
    // zero words from any seed, but keep the guard cheap and explicit.
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 0x9E3779B97F4A7C15ULL;
}

uint64_t RandomStream::next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double RandomStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform_pos() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
}

double RandomStream::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * kPi * u2;
    cached_normal_ = r * std::sin(a);
    has_cached_normal_ = true;
    return r * std::cos(a);
}

double RandomStream::exponential(double rate) {
    require(rate > 0.0, Errc::invalid_params, "exponential rate must be > 0");
    return -std::log(uniform_pos()) / rate;
}

bool RandomStream::bernoulli(double p) {
    return uniform() < p;
}

uint64_t RandomStream::below(uint64_t n) {
    require(n > 0, Errc::invalid_params, "below(0) is undefined");
    // Rejection sampling for an unbiased draw.
    const uint64_t limit = n * (UINT64_MAX / n);
    uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

} // namespace shuttlesim
