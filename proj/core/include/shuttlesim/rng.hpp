#pragma once

#include <cstdint>

namespace shuttlesim {

// Deterministic RNG with counter-based stream derivation. All stochastic code
// draws from a RandomStream obtained via derive_stream_seed(master, index), so
// results are independent of thread count and identical across platforms
// (std::normal_distribution and friends are implementation-defined, hence the
// explicit Box-Muller / inversion samplers here).

uint64_t splitmix64(uint64_t& state);

// Stable stream seed for sub-task `index` of a run keyed by `master`.
uint64_t derive_stream_seed(uint64_t master, uint64_t index);

class RandomStream {
public:
    explicit RandomStream(uint64_t seed);

    uint64_t next_u64();

    double uniform();      // [0, 1)
    double uniform_pos();  // (0, 1]
    double normal();       // standard normal, Box-Muller (cached pair)
    double exponential(double rate);
    bool bernoulli(double p);

    // uniform integer in [0, n)
    uint64_t below(uint64_t n);

private:
    uint64_t s_[4];
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

} // namespace shuttlesim
