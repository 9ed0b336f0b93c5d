#include "shuttlesim/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace shuttlesim {

namespace {
int g_max_threads = 0; // 0 = uninitialized, use hardware concurrency

int effective_threads() {
    if (g_max_threads > 0) return g_max_threads;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}
} // namespace

void set_max_threads(int n) { g_max_threads = n < 1 ? 0 : n; }

int max_threads() { return effective_threads(); }

std::size_t chunk_count(std::size_t n) {
    if (n == 0) return 0;
    // Fixed fan-out: enough chunks to keep any sane thread count busy, few
    // enough that the ordered combine stays cheap. Depends on n only.
    return std::min<std::size_t>(n, 128);
}

void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body) {
    const std::size_t chunks = chunk_count(n);
    if (chunks == 0) return;
    const std::size_t per = (n + chunks - 1) / chunks;

    const int nthreads = std::min<int>(effective_threads(), static_cast<int>(chunks));
    if (nthreads <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) {
            const std::size_t b = c * per;
            const std::size_t e = std::min(n, b + per);
            if (b < e) body(b, e, c);
        }
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= chunks) return;
            const std::size_t b = c * per;
            const std::size_t e = std::min(n, b + per);
            if (b >= e) continue;
            try {
                body(b, e, c);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nthreads) - 1);
    for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    if (error) std::rethrow_exception(error);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    parallel_chunks(n, [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t i = b; i < e; ++i) fn(i);
    });
}

} // namespace shuttlesim
