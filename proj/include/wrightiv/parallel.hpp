#pragma once
// Deterministic parallel loop: work items are independent, addressed by
// index, and write only to their own output slot, so results are identical
// for any thread count or schedule.

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace wrightiv {

// Runs fn(i) for i in [0, count). fn must not touch shared mutable state
// except through its own index. The first exception thrown by any item is
// rethrown to the caller after all workers stop.
template <class Fn>
void parallel_for(std::int64_t count, int threads, Fn&& fn) {
    if (count <= 0) return;
    if (threads < 1) threads = 1;
    if (threads == 1 || count == 1) {
        for (std::int64_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            const std::int64_t i = next.fetch_add(1);
            if (i >= count || failed.load()) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const int n_workers =
        static_cast<int>(std::min<std::int64_t>(threads, count));
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace wrightiv
