#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace polymerlab {

/// Worker count from POLYMERLAB_WORKERS, else the hardware concurrency.
inline unsigned worker_count() {
  if (const char* env = std::getenv("POLYMERLAB_WORKERS")) {
    try {
      int n = std::stoi(env);
      if (n >= 1) return static_cast<unsigned>(n);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(task, worker) for task in [0, n) over `workers` threads.
/// Tasks are claimed dynamically; callers store results by task index so
/// aggregation order never depends on scheduling. The first exception
/// thrown by any task is rethrown after all workers stop.
template <class Body>
void parallel_for(std::size_t n, Body&& body, unsigned workers = worker_count()) {
  workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), std::max<std::size_t>(n, 1)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i, 0u);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::atomic<bool> stop{false};
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (;;) {
          if (stop.load()) return;
          std::size_t i = next.fetch_add(1);
          if (i >= n) return;
          try {
            body(i, w);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!error) error = std::current_exception();
            stop = true;
          }
        }
      });
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace polymerlab
