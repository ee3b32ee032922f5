#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace tcsis {

// Static block partition of [0, n) over up to n_threads workers. Outputs must
// go to disjoint preallocated slots; no cross-thread reductions happen here,
// so results cannot depend on the thread count.
inline void parallel_for_blocks(
    std::int64_t n, int n_threads,
    const std::function<void(std::int64_t, std::int64_t)>& body) {
  if (n <= 0) return;
  const int workers =
      std::max(1, std::min<std::int64_t>(n_threads, n) > 0
                      ? static_cast<int>(std::min<std::int64_t>(n_threads, n))
                      : 1);
  if (workers == 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  const std::int64_t block = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::int64_t begin = static_cast<std::int64_t>(w) * block;
    const std::int64_t end = std::min<std::int64_t>(begin + block, n);
    if (begin >= end) break;
    pool.emplace_back([&, w, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace tcsis
