#pragma once

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

namespace flavr {

// Process-wide worker count for kernel-internal parallelism. Results are
// independent of this value: work is split across disjoint output ranges and
// every output element is produced by exactly one worker.
inline int& worker_count_ref() {
  static int count = 1;
  return count;
}

inline void set_worker_count(int n) { worker_count_ref() = std::max(1, n); }
inline int worker_count() { return worker_count_ref(); }

// Runs fn(begin, end) over a partition of [0, n).
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
  const int workers = std::min<std::int64_t>(worker_count(), n);
  if (workers <= 1 || n < 2) {
    if (n > 0) fn(std::int64_t{0}, n);
    return;
  }
  const std::int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    const std::int64_t begin = w * chunk;
    const std::int64_t end = std::min<std::int64_t>(begin + chunk, n);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace flavr
