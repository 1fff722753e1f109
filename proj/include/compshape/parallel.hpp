#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace compshape {

namespace detail {
inline std::atomic<int>& threadLimit() {
  static std::atomic<int> limit{0};
  return limit;
}
}  // namespace detail

// 0 means one worker per hardware thread.
inline void setThreadCount(int threads) { detail::threadLimit() = std::max(0, threads); }

inline int threadCount() {
  const int limit = detail::threadLimit();
  if (limit > 0) return limit;
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

// Runs fn(i) for i in [0, count). Each call must only write state owned by
// index i, which makes results independent of scheduling. The exception from
// the lowest failing index is rethrown.
template <typename Fn>
void parallelFor(std::size_t count, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threadCount()), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace compshape
