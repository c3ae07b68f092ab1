// Worker pool for batch-item parallelism. Results are always reduced in item
// order, so outputs are bit-identical for any worker count; OMNI_THREADS caps
// the count globally, --jobs per invocation.
#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

#include "omni/common.hpp"

namespace omni {

// Effective worker count: min(requested or hardware, OMNI_THREADS cap), >= 1.
inline int effective_threads(int requested = 0) {
    int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    if (const char* cap = std::getenv("OMNI_THREADS")) {
        int c = std::atoi(cap);
        if (c > 0 && c < n) n = c;
    }
    return n;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Exceptions are captured
// and the first one (by item index, not completion order) is rethrown after
// all workers join, keeping failure behavior deterministic too.
inline void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    int workers = std::min(effective_threads(jobs), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<size_t>(n));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    errors[static_cast<size_t>(i)] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace omni
