#pragma once

#include <cmath>
#include <cstddef>
#include <functional>

namespace shuttlesim {

// Thread-count-independent parallelism helpers. Work is split into a fixed
// number of chunks that depends only on the problem size; chunk results are
// combined in chunk order. Together with per-index RNG streams this makes all
// parallel code paths produce bit-identical results for any --threads value.

void set_max_threads(int n);   // n < 1 resets to hardware concurrency
int max_threads();

// Compensated (Kahan-Neumaier) accumulator.
class KahanSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

// Runs fn(i) for i in [0, n). Exceptions from workers are rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Splits [0, n) into fixed chunks, runs body(begin, end, slot) per chunk with
// `slot` the chunk index into a caller-owned accumulator array of size
// chunk_count(n). Chunk layout is independent of thread count.
std::size_t chunk_count(std::size_t n);
void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

} // namespace shuttlesim
