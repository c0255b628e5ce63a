// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace lidarsim {

/// Worker count used when a call does not pass one explicitly. Initialized
/// from LIDARSIM_WORKERS, falling back to 1.
int default_workers();
void set_default_workers(int workers);

/**
 * Calls fn(i) for i in [0, n) on up to `workers` threads using a static
 * contiguous partition. Callers write results into slot i, which keeps
 * output independent of the worker count.
 */
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, int workers = default_workers()) {
  constexpr std::size_t kMinPerWorker = 256;
  std::size_t threads = static_cast<std::size_t>(std::max(workers, 1));
  threads = std::min(threads, (n + kMinPerWorker - 1) / kMinPerWorker);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace lidarsim
