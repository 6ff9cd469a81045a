// Copyright Contributors to the panovol Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace panovol {

/// Worker count; 0 means "one per hardware thread".
struct Threads {
    std::size_t count = 1;

    std::size_t resolved() const {
        if (count != 0) {
            return count;
        }
        return std::max<std::size_t>(1, std::thread::hardware_concurrency());
    }
};

/// Runs `fn(block)` for block in [0, blocks) on up to `threads` workers.
/// Blocks are claimed dynamically; anything written per block must not
/// depend on which worker ran it. The first exception thrown is rethrown.
template <typename Fn>
void parallel_blocks(std::size_t blocks, Threads threads, Fn &&fn) {
    const std::size_t workers = std::min(threads.resolved(), blocks);
    if (workers <= 1) {
        for (std::size_t b = 0; b < blocks; ++b) {
            fn(b);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= blocks) {
                return;
            }
            try {
                fn(b);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
                next.store(blocks);
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers - 1);
        for (std::size_t w = 1; w < workers; ++w) {
            pool.emplace_back(work);
        }
        work();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

/// Splits [0, n) into contiguous ranges and runs `fn(begin, end)` on each.
template <typename Fn>
void parallel_range(std::size_t n, Threads threads, Fn &&fn, std::size_t grain = 64) {
    if (n == 0) {
        return;
    }
    const std::size_t blocks = (n + grain - 1) / grain;
    parallel_blocks(blocks, threads, [&](std::size_t b) {
        const std::size_t begin = b * grain;
        fn(begin, std::min(n, begin + grain));
    });
}

} // namespace panovol
