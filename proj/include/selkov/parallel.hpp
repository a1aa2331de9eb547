#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace selkov {

/// Runs body(i) for i in [0, n) on up to `threads` workers using contiguous
/// static chunks. Callers write results into slot i, so the outcome does not
/// depend on the schedule. The first exception thrown by a worker is rethrown.
template <class Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            const std::size_t lo = w * chunk;
            const std::size_t hi = std::min(n, lo + chunk);
            try {
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline unsigned default_threads() noexcept { return std::max(1u, std::thread::hardware_concurrency()); }

}  // namespace selkov
