#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ctsftm {

// Static-partition parallel map over [0, n).  Each index writes only its own
// output slot, so the result is identical for every thread count; reductions
// happen afterwards in index order.
template <typename F>
void parallel_for(std::size_t n, int threads, F&& body) {
  if (n == 0) return;
  const int hw = static_cast<int>(std::thread::hardware_concurrency());
  int t = threads <= 0 ? hw : threads;
  t = std::max(1, std::min<int>(t, static_cast<int>(n)));
  if (t == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(t));
  const std::size_t chunk = (n + static_cast<std::size_t>(t) - 1) / t;
  for (int w = 0; w < t; ++w) {
    const std::size_t lo = static_cast<std::size_t>(w) * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi]() {
      try {
        for (std::size_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace ctsftm
