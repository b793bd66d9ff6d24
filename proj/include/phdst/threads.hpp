#pragma once

// Worker-count control. PHDST_THREADS caps parallelism; the default of 1
// keeps every run single-threaded. Parallel callers must write only to
// per-index slots so results never depend on the thread count.

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace phdst {

inline int worker_threads() {
  const char* env = std::getenv("PHDST_THREADS");
  if (!env) return 1;
  const int n = std::atoi(env);
  if (n < 1) return 1;
  const int hw = static_cast<int>(std::thread::hardware_concurrency());
  return hw > 0 ? std::min(n, hw) : n;
}

// Runs fn(i) for i in [0, n); fn must only touch state owned by index i.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const int threads = worker_threads();
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t t = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (std::size_t w = 0; w < t; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += t) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace phdst
