#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace balkit {

inline int hardware_threads() {
  if (const char* env = std::getenv("BALKIT_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Static range split across worker threads. fn must be safe to call
// concurrently for distinct indices; results must not depend on scheduling.
inline void parallel_for(int n, const std::function<void(int)>& fn) {
  const int threads = std::min(hardware_threads(), n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([=, &fn] {
      for (int i = t; i < n; i += threads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

// Contiguous chunk variant: fn(begin, end) over [0, n).
inline void parallel_chunks(int n, int chunk,
                            const std::function<void(int, int)>& fn) {
  const int chunks = (n + chunk - 1) / chunk;
  parallel_for(chunks, [&](int c) {
    const int begin = c * chunk;
    fn(begin, std::min(n, begin + chunk));
  });
}

}  // namespace balkit
