#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace ontoforge {

/// Runs fn(i) for i in [0, n) on at most `parallelism` threads. `fn` must
/// not throw; callers capture per-item errors themselves.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t parallelism, Fn&& fn) {
  parallelism = std::max<std::size_t>(1, std::min(parallelism, n));
  if (parallelism <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> workers;
  workers.reserve(parallelism);
  for (std::size_t w = 0; w < parallelism; ++w) {
    workers.emplace_back([&] {
      for (auto i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
}

}  // namespace ontoforge
