#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace deepform {

// Row-partitioned parallel loop. Each index writes only its own output
// slots, so results are bit-identical for any thread count.
template <class F>
void parallel_for(size_t n, int threads, F&& body) {
    if (threads <= 1 || n < 2) {
        for (size_t i = 0; i < n; ++i) body(i);
        return;
    }
    size_t t = std::min<size_t>(static_cast<size_t>(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(t);
    size_t chunk = (n + t - 1) / t;
    for (size_t w = 0; w < t; ++w) {
        size_t lo = w * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace deepform
