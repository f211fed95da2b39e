#pragma once

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace fdpu {

// Worker count from explicit request, FDPU_WORKERS, or the machine.
inline int resolve_workers(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("FDPU_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0) return w;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(block_index, begin, end) over fixed-size blocks of [0, n).
//
// The block partition depends only on (n, block_size), never on the worker
// count; workers pull blocks dynamically. Callers that reduce must store
// per-block partials and combine them in block order so results are
// bit-identical for any number of workers.
template <class Fn>
void parallel_blocks(long n, long block_size, int workers, Fn fn) {
  if (n <= 0) return;
  const long n_blocks = (n + block_size - 1) / block_size;
  workers = std::min<long>(resolve_workers(workers), n_blocks);
  if (workers <= 1) {
    for (long b = 0; b < n_blocks; ++b) {
      fn(b, b * block_size, std::min(n, (b + 1) * block_size));
    }
    return;
  }
  std::atomic<long> next{0};
  auto work = [&] {
    for (;;) {
      const long b = next.fetch_add(1);
      if (b >= n_blocks) break;
      fn(b, b * block_size, std::min(n, (b + 1) * block_size));
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int i = 1; i < workers; ++i) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
}

}  // namespace fdpu
