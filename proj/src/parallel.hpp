#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace hetgraph::detail {

/// Calls fn(chunk, begin, end) over `threads` contiguous chunks of [0, n).
/// Chunk boundaries depend only on n and threads. The first exception thrown
/// by any chunk is rethrown.
template <typename Fn>
void for_each_chunk(std::size_t n, unsigned threads, Fn&& fn) {
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
    if (workers == 1) {
        fn(std::size_t{0}, std::size_t{0}, n);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t c = 0; c < workers; ++c) {
        const std::size_t begin = n * c / workers;
        const std::size_t end = n * (c + 1) / workers;
        pool.emplace_back([&, c, begin, end] {
            try {
                fn(c, begin, end);
            } catch (...) {
                errors[c] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace hetgraph::detail
