#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace sensekit {

/// Applies fn to every item with at most max_parallel workers and returns the
/// results in input order. The first exception (by item index) is rethrown
/// after all workers have joined.
template <typename In, typename Fn>
auto parallel_map(const std::vector<In>& items, Fn fn, std::size_t max_parallel)
    -> std::vector<decltype(fn(items.front()))> {
  using Out = decltype(fn(items.front()));
  std::vector<Out> results(items.size());
  if (items.empty()) return results;

  if (max_parallel < 1) max_parallel = 1;
  const std::size_t workers = std::min(max_parallel, items.size());

  if (workers == 1) {
    for (std::size_t i = 0; i < items.size(); ++i) results[i] = fn(items[i]);
    return results;
  }

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(items.size());
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= items.size()) return;
        try {
          results[i] = fn(items[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace sensekit
