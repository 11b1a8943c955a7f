#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace scbct {

// Worker count used by the elementwise loops. Honors SCBCT_THREADS when set.
// Results never depend on this value: parallel loops only ever write disjoint
// elements, and every scalar reduction in the library runs sequentially.
inline int thread_count() {
    if (const char* env = std::getenv("SCBCT_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [begin, end) with each index handled by exactly one
// worker. fn must only write state owned by index i.
template <typename Fn>
void parallel_for(std::int64_t begin, std::int64_t end, Fn&& fn) {
    const std::int64_t n = end - begin;
    if (n <= 0) return;
    const int workers = static_cast<int>(std::min<std::int64_t>(thread_count(), n));
    if (workers == 1) {
        for (std::int64_t i = begin; i < end; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::int64_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const std::int64_t lo = begin + w * chunk;
        const std::int64_t hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn]() {
            for (std::int64_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace scbct
