#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace hilearn {

// Runs fn(0..n-1) on up to `jobs` threads (0 = hardware concurrency). Each
// index owns its output slot, so results are deterministic regardless of
// scheduling. The first exception thrown by any task is rethrown here.
inline void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (jobs == 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  if (jobs < 1) jobs = 1;
  if (jobs == 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> workers;
  int thread_count = std::min(jobs, n);
  workers.reserve(thread_count);
  for (int w = 0; w < thread_count; ++w) {
    workers.emplace_back([&] {
      for (;;) {
        int i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failed.load()) std::rethrow_exception(error);
}

}  // namespace hilearn
