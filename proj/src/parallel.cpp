#include "ivgf/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>

namespace ivgf {

namespace {
std::atomic<int> g_threads{0};

int effective_threads() {
  int n = g_threads.load();
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  return std::max(1, n);
}
}  // namespace

void set_thread_count(int n) { g_threads.store(n); }
int thread_count() { return effective_threads(); }

void parallel_for_workers(int n, const std::function<void(int, int)>& fn) {
  const int T = std::min(effective_threads(), std::max(1, n));
  if (T == 1) {
    for (int i = 0; i < n; ++i) fn(0, i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(T);
  pool.reserve(T - 1);
  auto work = [&](int w) {
    try {
      for (int i = w; i < n; i += T) fn(w, i);
    } catch (...) {
      errs[w] = std::current_exception();
    }
  };
  for (int w = 1; w < T; ++w) pool.emplace_back(work, w);
  work(0);
  for (auto& t : pool) t.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  parallel_for_workers(n, [&](int, int i) { fn(i); });
}

}  // namespace ivgf
