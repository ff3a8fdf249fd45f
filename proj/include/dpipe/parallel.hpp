#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace dpipe {

/// Runs fn(i) for i in [0, n) across up to `threads` workers (0 = hardware
/// count), each result landing in its own slot. Callers reduce the slots
/// serially in index order, so results are independent of scheduling.
template <typename Result>
std::vector<Result> parallel_map(int n, const std::function<Result(int)>& fn, int threads = 0) {
    std::vector<Result> out(static_cast<std::size_t>(n));
    if (n == 0) return out;
    int k = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    k = std::max(1, std::min(k, n));
    if (k == 1) {
        for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = fn(i);
        return out;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                out[static_cast<std::size_t>(i)] = fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
    return out;
}

} // namespace dpipe
