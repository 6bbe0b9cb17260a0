#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace editisp {

/// Run fn(i) for i in [0, n). With threads <= 1 this is a plain loop; with
/// more threads the range is split into contiguous blocks. Results that feed
/// reductions must be accumulated per block and combined in block order so
/// output does not depend on the thread count.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (std::size_t t = 0; t < nt; ++t) {
        pool.emplace_back([&, t] {
            const std::size_t lo = n * t / nt;
            const std::size_t hi = n * (t + 1) / nt;
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace editisp
