#pragma once

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace softhjb {

inline int& worker_threads() {
    static int n = 1;
    return n;
}

inline void set_worker_threads(int n) { worker_threads() = std::max(1, n); }

// Runs fn(chunk_index, begin, end) over fixed-size index chunks. The chunk
// decomposition depends only on n and chunk_size, never on scheduling, so
// per-chunk accumulation followed by an in-order reduction is deterministic
// for any thread count.
template <class Fn>
void parallel_for_chunks(int n, int chunk_size, Fn&& fn) {
    const int n_chunks = (n + chunk_size - 1) / chunk_size;
    const int threads = std::min(worker_threads(), n_chunks);
    if (threads <= 1) {
        for (int c = 0; c < n_chunks; ++c)
            fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (int c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1))
                fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace softhjb
