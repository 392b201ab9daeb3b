#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace taxclass {

// Runs fn(0..n-1) on up to `concurrency` worker threads. fn must handle its
// own exceptions; an escaped exception terminates the process by design of
// std::thread. Honors an optional cancellation flag between items.
inline void parallel_for(size_t n, size_t concurrency,
                         const std::function<void(size_t)>& fn,
                         const std::atomic<bool>* cancel = nullptr) {
  if (n == 0) return;
  if (concurrency == 0) concurrency = 1;
  if (concurrency > n) concurrency = n;

  if (concurrency == 1) {
    for (size_t i = 0; i < n; ++i) {
      if (cancel != nullptr && cancel->load()) return;
      fn(i);
    }
    return;
  }

  std::atomic<size_t> next{0};
  std::vector<std::thread> workers;
  workers.reserve(concurrency);
  for (size_t w = 0; w < concurrency; ++w) {
    workers.emplace_back([&] {
      while (true) {
        if (cancel != nullptr && cancel->load()) return;
        const size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (std::thread& t : workers) t.join();
}

// Process-wide cancellation flag, set from the CLI signal handler so batch
// runs can flush completed work before exiting.
std::atomic<bool>& cancel_flag();

}  // namespace taxclass
