#include "roadgs/parallel.hpp"

#include <atomic>

namespace roadgs {

namespace {
std::atomic<int> g_default_threads{0};
}

void set_default_threads(int n) { g_default_threads.store(n < 0 ? 0 : n); }

int default_threads() { return g_default_threads.load(); }

int resolve_threads(int requested) {
  int n = requested > 0 ? requested : g_default_threads.load();
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  return n <= 0 ? 1 : n;
}

}  // namespace roadgs
