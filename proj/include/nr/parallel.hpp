#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace nr {

// Process-wide worker count. 1 (the default) means everything runs on the
// calling thread, which is the deterministic mode used by the tests.
// Nested parallel_for calls run serially on the worker they land on.
int worker_count();
void set_worker_count(int n);

namespace detail {
struct ParallelRegion {
    ParallelRegion();
    ~ParallelRegion();
};
}  // namespace detail

// Splits [0, n) into contiguous chunks and runs fn(begin, end) on each.
// Chunk boundaries depend only on (n, workers), so a fixed worker count
// always yields the same partition.
inline void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    const int workers = worker_count();
    if (workers <= 1 || n == 1) {
        fn(0, n);
        return;
    }
    const int chunks = static_cast<int>(std::min<std::int64_t>(workers, n));
    const std::int64_t per = (n + chunks - 1) / chunks;
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(chunks));
    for (int c = 0; c < chunks; ++c) {
        const std::int64_t lo = c * per;
        const std::int64_t hi = std::min<std::int64_t>(n, lo + per);
        if (lo >= hi) break;
        threads.emplace_back([&fn, lo, hi] {
            detail::ParallelRegion region;
            fn(lo, hi);
        });
    }
    for (auto& t : threads) t.join();
}

}  // namespace nr
