#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace ivgf {

/// Process-wide worker count for tile-parallel loops. 0 = hardware default.
void set_thread_count(int n);
int thread_count();

/// Runs fn(i) for i in [0, n). Work is strided statically: worker t takes
/// indices t, t+T, t+2T, ... so the index-to-worker mapping is a pure
/// function of the thread count. Exceptions propagate from worker 0 only;
/// other workers' exceptions rethrow after join.
void parallel_for(int n, const std::function<void(int)>& fn);

/// Like parallel_for but fn(worker, i); workers are numbered 0..T-1 so the
/// caller can keep per-worker accumulation buffers and reduce them in
/// worker order afterwards.
void parallel_for_workers(int n, const std::function<void(int, int)>& fn);

}  // namespace ivgf
