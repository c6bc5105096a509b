#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace kenkf {

/// Worker cap: KENKF_THREADS if set (values < 1 clamp to 1), else hardware
/// concurrency.
inline int worker_count() {
  if (const char* env = std::getenv("KENKF_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
    return 1;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Parallel map over [0, n). `body(i)` must touch only slot-i state; results
/// are then bitwise independent of the thread count and of scheduling.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                         int threads = worker_count()) {
  if (n == 0) return;
  const std::size_t nt = std::min<std::size_t>(std::max(threads, 1), n);
  if (nt == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(nt);
  const std::size_t chunk = (n + nt - 1) / nt;
  for (std::size_t t = 0; t < nt; ++t) {
    const std::size_t lo = t * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace kenkf
