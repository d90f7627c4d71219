#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace ctxvid::harness {

/// Runs f(i) for i < n on up to `workers` threads and returns the results in
/// index order. Work is dealt round-robin, so output never depends on timing.
/// The first exception (by index) is rethrown after all threads join.
template <class F>
auto parallel_map(std::size_t n, F&& f, std::size_t workers = 0) -> std::vector<decltype(f(std::size_t{}))> {
  using R = decltype(f(std::size_t{}));
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(n, 1));
  std::vector<R> out(n);
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t w) {
    for (std::size_t i = w; i < n; i += workers) {
      try {
        out[i] = f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace ctxvid::harness
