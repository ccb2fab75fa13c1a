#pragma once

#include <cstdint>
#include <thread>
#include <vector>

namespace negtome {

// Worker cap from NEGTOME_THREADS (0 or unset = hardware concurrency).
int64_t worker_count();

// Runs fn(begin, end) over a partition of [0, n). Chunks are contiguous and
// disjoint, so any computation whose slot i depends only on the inputs is
// bitwise independent of the worker count. Small n runs inline.
template <class Fn>
void parallel_for(int64_t n, Fn&& fn, int64_t grain = 256) {
    if (n <= 0) return;
    const int64_t workers = worker_count();
    if (workers <= 1 || n < 2 * grain) {
        fn(int64_t{0}, n);
        return;
    }
    const int64_t chunks = std::min(workers, (n + grain - 1) / grain);
    const int64_t per = (n + chunks - 1) / chunks;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(chunks - 1));
    for (int64_t c = 1; c < chunks; ++c) {
        const int64_t begin = c * per;
        const int64_t end = std::min(n, begin + per);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    fn(int64_t{0}, std::min(n, per));
    for (auto& t : pool) t.join();
}

} // namespace negtome
