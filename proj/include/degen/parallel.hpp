#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace degen {

// DEGEN_CONTROL_THREADS caps the worker count; default is the hardware concurrency.
inline unsigned worker_count()
{
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("DEGEN_CONTROL_THREADS")) {
        try {
            long v = std::stol(env);
            if (v >= 1) return unsigned(std::min<long>(v, hw * 4L));
        } catch (...) {
        }
    }
    return hw;
}

// Runs f(0..n-1) on up to worker_count() threads; rethrows the first exception by index.
template <class F>
void parallel_for(int n, F&& f)
{
    const unsigned workers = std::min<unsigned>(worker_count(), unsigned(std::max(n, 1)));
    std::vector<std::exception_ptr> errors(std::max(n, 0));
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) {
            try {
                f(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (int i = next++; i < n; i = next++) {
                    try {
                        f(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace degen
