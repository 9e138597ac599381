#pragma once

#include <cstdint>
#include <thread>
#include <vector>

namespace roadgs {

/// Process-wide default worker count. 0 means "use hardware concurrency".
void set_default_threads(int n);
int default_threads();
int resolve_threads(int requested);

/// Static-chunked parallel loop over [0, n). Iterations must write disjoint
/// state; the chunk assignment is fixed by (n, threads), never by timing, so
/// results are identical for any worker count.
template <class Fn>
void parallel_for(std::int64_t n, Fn&& fn, int threads = 0) {
  const int workers = resolve_threads(threads);
  if (n <= 0) return;
  if (workers <= 1 || n == 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int used = static_cast<int>(std::min<std::int64_t>(workers, n));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(used));
  for (int w = 0; w < used; ++w) {
    const std::int64_t begin = n * w / used;
    const std::int64_t end = n * (w + 1) / used;
    pool.emplace_back([&fn, begin, end] {
      for (std::int64_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace roadgs
