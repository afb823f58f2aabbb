#pragma once

#include <cstddef>
#include <future>
#include <vector>

namespace seedfill {

// Evaluates fn(i) for i in [0, n) with at most `limit` tasks in flight and
// returns the results in index order.
template <typename Fn>
auto bounded_map(size_t n, int limit, Fn fn) -> std::vector<decltype(fn(size_t{}))> {
  using R = decltype(fn(size_t{}));
  std::vector<R> results;
  results.reserve(n);
  if (limit <= 1) {
    for (size_t i = 0; i < n; ++i) results.push_back(fn(i));
    return results;
  }
  for (size_t start = 0; start < n; start += static_cast<size_t>(limit)) {
    std::vector<std::future<R>> batch;
    const size_t end = std::min(n, start + static_cast<size_t>(limit));
    for (size_t i = start; i < end; ++i) batch.push_back(std::async(std::launch::async, fn, i));
    for (auto& f : batch) results.push_back(f.get());
  }
  return results;
}

}  // namespace seedfill
