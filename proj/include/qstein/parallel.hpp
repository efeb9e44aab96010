#pragma once

#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace qstein {

// Worker count: QSTEIN_THREADS env var caps it, 0 or unset means "auto".
inline int max_threads() {
  int n = 0;
  if (const char* env = std::getenv("QSTEIN_THREADS")) {
    try {
      n = std::stoi(env);
    } catch (...) {
      n = 0;
    }
  }
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  return n > 0 ? n : 1;
}

// Deterministic block map-reduce.  Work is cut into fixed-size blocks; each
// block's partial is computed independently (any worker, any order) and the
// partials are combined sequentially in block order.  The result is therefore
// a pure function of (n, block_size, fn) — identical for 1 or 64 workers.
template <class T, class BlockFn, class CombineFn>
T block_reduce(std::size_t n, std::size_t block_size, T init, BlockFn fn, CombineFn combine) {
  if (n == 0) return init;
  if (block_size == 0) block_size = 1;
  const std::size_t nblocks = (n + block_size - 1) / block_size;
  const int workers = std::min<std::size_t>(max_threads(), nblocks);

  std::vector<T> partial(nblocks);
  if (workers <= 1) {
    for (std::size_t b = 0; b < nblocks; ++b) {
      const std::size_t lo = b * block_size;
      partial[b] = fn(lo, std::min(n, lo + block_size));
    }
  } else {
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (;;) {
        const std::size_t b = next.fetch_add(1);
        if (b >= nblocks) return;
        const std::size_t lo = b * block_size;
        partial[b] = fn(lo, std::min(n, lo + block_size));
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
  }

  T acc = std::move(init);
  for (std::size_t b = 0; b < nblocks; ++b) acc = combine(std::move(acc), std::move(partial[b]));
  return acc;
}

// Same scheme, no reduction: fn(lo, hi) fills disjoint output ranges.
template <class BlockFn>
void block_for(std::size_t n, std::size_t block_size, BlockFn fn) {
  block_reduce<int>(
      n, block_size, 0,
      [&](std::size_t lo, std::size_t hi) {
        fn(lo, hi);
        return 0;
      },
      [](int a, int) { return a; });
}

}  // namespace qstein
