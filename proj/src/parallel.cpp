#include "morphield/parallel.hpp"

#include <cstdlib>
#include <string>

namespace morphield {

namespace {
std::atomic<std::size_t> g_override{0};

std::size_t from_environment() {
  const char* env = std::getenv("MORPHIELD_THREADS");
  if (env == nullptr || *env == '\0') return 0;
  try {
    const long value = std::stol(env);
    return value > 0 ? static_cast<std::size_t>(value) : 0;
  } catch (...) {
    return 0;
  }
}
}  // namespace

std::size_t worker_count() {
  if (const std::size_t pinned = g_override.load(); pinned > 0) return pinned;
  if (const std::size_t env = from_environment(); env > 0) return env;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void set_worker_count(std::size_t workers) { g_override.store(workers); }

ScopedWorkerCount::ScopedWorkerCount(std::size_t workers) : previous_(g_override.load()) {
  g_override.store(workers);
}

ScopedWorkerCount::~ScopedWorkerCount() { g_override.store(previous_); }

}  // namespace morphield
