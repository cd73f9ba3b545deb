#pragma once

#include <atomic>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace driverep {

// Process-wide worker count for parallel_for. 1 means fully serial.
int default_threads();
void set_default_threads(int n);

// Runs fn(i) for i in [0, n). Each index is processed exactly once and
// indices never share mutable state, so results are identical for any
// thread count; reductions stay with the caller, in index order.
inline void parallel_for(int n, const std::function<void(int)>& fn,
                         int threads = 0) {
  if (threads <= 0) threads = default_threads();
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = std::min(threads, n);
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace driverep
