#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace cqrank {

/// Worker count: CQRANK_THREADS when set to a positive integer, otherwise
/// the hardware concurrency. Only ever affects speed.
inline std::size_t default_worker_count() {
    if (const char* env = std::getenv("CQRANK_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls task(i) for i in [0, n) on up to `workers` threads. Tasks must
/// write to disjoint outputs; the first exception is rethrown.
template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& task) {
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) task(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        threads.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) task(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace cqrank
