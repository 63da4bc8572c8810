#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace clinistruct::detail {

// Runs fn(begin, end, worker) over contiguous chunks of [0, n).
template <typename Fn>
void parallel_chunks(std::size_t n, unsigned threads, Fn&& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        fn(std::size_t{0}, n, 0u);
        return;
    }
    std::vector<std::jthread> pool;
    std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        std::size_t b = t * chunk, e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&fn, b, e, t] { fn(b, e, t); });
    }
}

}  // namespace clinistruct::detail
