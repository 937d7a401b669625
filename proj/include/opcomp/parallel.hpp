#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace opcomp {

/// Process-wide cap on worker threads (set from `--threads` / OPCOMP_THREADS).
inline std::atomic<int>& thread_limit() {
  static std::atomic<int> limit{1};
  return limit;
}

inline void set_thread_limit(int n) { thread_limit() = std::max(1, n); }

/// Runs body(i) for i in [0, count) on up to thread_limit() workers. Each index
/// is visited exactly once; results must be written to disjoint slots. The
/// first exception thrown by any body is rethrown on the calling thread.
template <typename Body>
void parallel_for(std::ptrdiff_t count, Body&& body) {
  const int workers =
      static_cast<int>(std::min<std::ptrdiff_t>(thread_limit().load(), count));
  if (workers <= 1) {
    for (std::ptrdiff_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::ptrdiff_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::ptrdiff_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace opcomp
