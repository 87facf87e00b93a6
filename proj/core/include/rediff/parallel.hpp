#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace rediff {

inline int hardware_workers() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

/// Runs fn over fixed-size index chunks [begin,end). Chunk boundaries depend
/// only on (n, chunk), never on the worker count, so callers that keep one
/// accumulator per chunk and merge them in chunk order get results that are
/// independent of the parallelism degree.
inline void parallel_chunks(
    std::int64_t n, int workers, std::int64_t chunk,
    const std::function<void(std::int64_t chunk_id, std::int64_t begin,
                             std::int64_t end)>& fn) {
  if (n <= 0) return;
  if (chunk <= 0) chunk = 1;
  const std::int64_t n_chunks = (n + chunk - 1) / chunk;
  if (workers <= 1 || n_chunks == 1) {
    for (std::int64_t c = 0; c < n_chunks; ++c)
      fn(c, c * chunk, std::min(n, (c + 1) * chunk));
    return;
  }
  std::atomic<std::int64_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::int64_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      fn(c, c * chunk, std::min(n, (c + 1) * chunk));
    }
  };
  std::vector<std::thread> ts;
  const int w = static_cast<int>(std::min<std::int64_t>(workers, n_chunks));
  ts.reserve(static_cast<std::size_t>(w));
  for (int t = 0; t < w; ++t) ts.emplace_back(worker);
  for (auto& t : ts) t.join();
}

}  // namespace rediff
