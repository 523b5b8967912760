#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace seqint {

// Runs fn(i) for i in [0, n_items). Tasks are claimed from an atomic counter,
// so scheduling is load-balanced, but each task is identified solely by its
// index: as long as fn(i) writes only to slot i of some preallocated output,
// results are identical for any worker count. The first exception thrown by
// any task is rethrown on the calling thread after all workers join.
inline void parallel_for(int workers, std::int64_t n_items,
                         const std::function<void(std::int64_t)>& fn) {
  if (workers <= 1 || n_items <= 1) {
    for (std::int64_t i = 0; i < n_items; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::exception_ptr first_error = nullptr;
  std::mutex error_mutex;
  auto body = [&]() {
    for (;;) {
      const std::int64_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n_items) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const int n_threads = static_cast<int>(
      std::min<std::int64_t>(workers, n_items));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_threads) - 1);
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(body);
  body();
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace seqint
