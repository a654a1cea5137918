#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ntd {

// Static contiguous partition of [0, n) over at most `threads` workers.
// f(begin, end, worker) must only write to index-owned or worker-owned state,
// so results never depend on the thread count.
template <class F>
void parallel_blocks(std::size_t n, unsigned threads, F&& f) {
  if (threads <= 1 || n <= 1) {
    f(std::size_t{0}, n, 0u);
    return;
  }
  unsigned t = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex m;
  for (unsigned w = 0; w < t; ++w) {
    std::size_t lo = n * w / t, hi = n * (w + 1) / t;
    pool.emplace_back([&, lo, hi, w] {
      try {
        f(lo, hi, w);
      } catch (...) {
        std::lock_guard<std::mutex> lock(m);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace ntd
