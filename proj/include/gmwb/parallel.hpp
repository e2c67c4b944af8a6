#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace gmwb {

/// Runs body(begin, end, worker) over a static contiguous partition of
/// [0, n). Each index is handled by exactly one worker, so results never
/// depend on the thread count as long as body writes per-index outputs only.
/// The first exception thrown by any worker is rethrown.
template <typename Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads < 1 ? 1 : threads, n));
  if (workers == 1) {
    body(std::size_t{0}, n, 0);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    const std::size_t begin = n * t / workers;
    const std::size_t end = n * (t + 1) / workers;
    pool.emplace_back([&, begin, end, t] {
      try {
        body(begin, end, static_cast<int>(t));
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace gmwb
