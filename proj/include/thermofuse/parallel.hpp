#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace thermofuse {

/// Worker count: hardware concurrency, capped by THERMOFUSE_THREADS when set.
inline std::size_t thread_count() {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("THERMOFUSE_THREADS")) {
        try {
            const long cap = std::stol(env);
            if (cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
        } catch (const std::exception&) {
            // unparsable value: keep the default
        }
    }
    return n;
}

/// Runs body(i) for i in [0, count) on contiguous chunks. Each index is
/// handled by exactly one thread, so results do not depend on the worker count.
template <typename Body>
void parallel_for(std::size_t count, Body&& body) {
    const std::size_t workers = std::min(thread_count(), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (count + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace thermofuse
