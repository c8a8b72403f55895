#pragma once

#include <cstddef>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace seqadv {

// Worker cap for data-parallel loops, from SEQADV_THREADS. Defaults to 1 so
// every run is bit-deterministic unless the user opts in.
inline int max_workers() {
  const char* env = std::getenv("SEQADV_THREADS");
  if (!env) return 1;
  int n = std::atoi(env);
  if (n < 1) return 1;
  return n;
}

// Runs fn(i) for i in [0, n). Results must be written to disjoint slots so the
// outcome is independent of scheduling; aggregation stays with the caller.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const int workers = max_workers();
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  std::vector<std::thread> pool;
  pool.reserve(k);
  for (std::size_t w = 0; w < k; ++w) {
    pool.emplace_back([&, w]() {
      for (std::size_t i = w; i < n; i += k) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace seqadv
