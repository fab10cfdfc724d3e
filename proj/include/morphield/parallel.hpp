#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace morphield {

// Number of workers used by parallel_for. Resolution order: explicit
// override, the MORPHIELD_THREADS environment variable, then the hardware
// concurrency. Always >= 1.
std::size_t worker_count();

// 0 clears the override.
void set_worker_count(std::size_t workers);

// Temporarily pins the worker count (tests, benchmarks).
class ScopedWorkerCount {
 public:
  explicit ScopedWorkerCount(std::size_t workers);
  ~ScopedWorkerCount();
  ScopedWorkerCount(const ScopedWorkerCount&) = delete;
  ScopedWorkerCount& operator=(const ScopedWorkerCount&) = delete;

 private:
  std::size_t previous_;
};

// Runs body(i) for i in [begin, end). Chunks of `grain` indices are handed
// out dynamically, so body must not depend on which worker runs it. The
// first exception thrown by any worker is rethrown on the caller.
template <class Body>
void parallel_for(std::size_t begin, std::size_t end, Body&& body, std::size_t grain = 1) {
  if (end <= begin) return;
  grain = std::max<std::size_t>(grain, 1);
  const std::size_t count = end - begin;
  const std::size_t chunks = (count + grain - 1) / grain;
  const std::size_t workers = std::min(worker_count(), chunks);
  if (workers <= 1) {
    for (std::size_t i = begin; i < end; ++i) body(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    try {
      for (;;) {
        const std::size_t chunk = next.fetch_add(1, std::memory_order_relaxed);
        if (chunk >= chunks) break;
        const std::size_t lo = begin + chunk * grain;
        const std::size_t hi = std::min(end, lo + grain);
        for (std::size_t i = lo; i < hi; ++i) body(i);
      }
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
      next.store(chunks, std::memory_order_relaxed);
    }
  };

  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace morphield
