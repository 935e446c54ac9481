#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace score {

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
/// (by index) is rethrown after all workers finish; remaining work is skipped.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex mutex;
    std::size_t error_index = n;
    std::exception_ptr error;
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < n && !failed.load(); i = next.fetch_add(1)) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(mutex);
                        if (i < error_index) {
                            error_index = i;
                            error = std::current_exception();
                        }
                        failed.store(true);
                    }
                }
            });
        }
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace score
