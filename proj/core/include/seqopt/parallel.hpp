#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace seqopt {

// Splits [0, n) into contiguous chunks, one per worker, and runs
// fn(begin, end, worker) on each. Chunk boundaries depend only on n and the
// worker count, so per-chunk results can be merged deterministically.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n));
  if (workers <= 1) {
    fn(std::size_t{0}, n, std::size_t{0});
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(n, w * chunk);
    const std::size_t end = std::min(n, begin + chunk);
    pool.emplace_back([&fn, begin, end, w] { fn(begin, end, w); });
  }
  for (auto& t : pool) t.join();
}

// Below this many items per stage the thread start-up cost dominates.
inline constexpr std::size_t kParallelGrain = 1u << 14;

}  // namespace seqopt
