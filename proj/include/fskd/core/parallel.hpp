#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace fskd {

// Worker-thread cap: FSKD_THREADS env var, else hardware concurrency.
inline std::size_t worker_threads() {
  if (const char* env = std::getenv("FSKD_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Splits [0, n) into contiguous chunks, one worker per chunk. The chunk
// boundaries depend only on (n, threads), so any per-chunk results can be
// reduced in a fixed order by the caller.
inline void parallel_for_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  const std::size_t threads = std::min(worker_threads(), n == 0 ? std::size_t{1} : n);
  if (threads <= 1) {
    if (n > 0) fn(0, 0, n);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, t, begin, end] { fn(t, begin, end); });
  }
  for (auto& th : pool) th.join();
}

// Work-queue over chunks of a FIXED size. Chunk boundaries are independent
// of the thread count, so per-chunk partial results reduced in chunk order
// give bit-identical totals no matter how many workers ran.
inline void parallel_for_fixed_chunks(std::size_t n, std::size_t chunk_size,
                                      const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t n_chunks = (n + chunk_size - 1) / chunk_size;
  const std::size_t threads = std::min(worker_threads(), n_chunks);
  if (threads <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t c = next.fetch_add(1);
        if (c >= n_chunks) return;
        fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace fskd
