#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace bld {

/// Malformed or inconsistent input. The CLI maps this to exit status 1.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inclusive week range. `last < 0` means open-ended.
struct WeekRange {
    int first = 0;
    int last = -1;

    bool contains(int week) const { return week >= first && (last < 0 || week <= last); }
    bool open_ended() const { return last < 0; }
};

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// visited exactly once, so output is independent of the thread count as
/// long as fn writes only to slot i.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(threads < 1 ? 1 : threads, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t t = 0; t < workers; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([begin, end, &fn] {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace bld
