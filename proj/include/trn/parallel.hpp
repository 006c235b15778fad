#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace trn {

// TRN_THREADS caps inner element-loop parallelism; 0 or unset means one
// thread per hardware core. Read once per process.
inline int thread_budget() {
  static const int budget = [] {
    const int hw = std::max(1u, std::thread::hardware_concurrency());
    const char* env = std::getenv("TRN_THREADS");
    if (!env || !*env) return hw;
    const int v = std::atoi(env);
    return v <= 0 ? hw : v;
  }();
  return budget;
}

// Chunked parallel loop. f(i) may only write to slot i of preallocated
// storage, so results are identical for any thread count.
template <class F>
void parallel_for(int n, F&& f) {
  constexpr int kChunk = 32;
  const int nt = std::min(thread_budget(), (n + kChunk - 1) / kChunk);
  if (nt <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    try {
      for (;;) {
        const int begin = next.fetch_add(kChunk);
        if (begin >= n || failed.load()) return;
        const int end = std::min(begin + kChunk, n);
        for (int i = begin; i < end; ++i) f(i);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
      failed.store(true);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(nt - 1);
  for (int t = 1; t < nt; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace trn
