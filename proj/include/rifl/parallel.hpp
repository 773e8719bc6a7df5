#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace rifl {

// Worker count: RIFL_THREADS if set and positive, else the hardware count.
inline int worker_count() {
  int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("RIFL_THREADS")) {
    try {
      int v = std::stoi(env);
      if (v > 0) return v;
    } catch (const std::exception&) {
    }
  }
  return hw;
}

// body(i) for i in [0, count).  Items are claimed from a shared counter, so
// callers must write results into per-item slots; the output then does not
// depend on scheduling.  The first exception is rethrown after all workers
// stop.
template <class Body>
void parallel_for(std::size_t count, Body&& body, int workers = worker_count()) {
  workers = std::max(1, std::min<int>(workers, static_cast<int>(std::min<std::size_t>(count, 1 << 16))));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first;
  std::atomic_flag error_set = ATOMIC_FLAG_INIT;
  auto run = [&] {
    for (;;) {
      if (stop.load(std::memory_order_relaxed)) return;
      std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        if (!error_set.test_and_set()) first = std::current_exception();
        stop = true;
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

}  // namespace rifl
