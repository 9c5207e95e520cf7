#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace fbsde {

// contiguous range split; callers write disjoint slots only, so results do
// not depend on the worker count
template <class F>
void parallel_chunks(long n, int workers, F&& body) {
    if (n <= 0) return;
    const int w = std::max(1, workers);
    if (w == 1 || n < 2 * w) {
        body(0L, n);
        return;
    }
    const long chunk = (n + w - 1) / w;
    std::vector<std::thread> threads;
    threads.reserve(w);
    for (int i = 0; i < w; ++i) {
        const long b = i * chunk, e = std::min(n, b + chunk);
        if (b >= e) break;
        threads.emplace_back([&body, b, e] { body(b, e); });
    }
    for (auto& t : threads) t.join();
}

}  // namespace fbsde
