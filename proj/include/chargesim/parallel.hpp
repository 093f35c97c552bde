#ifndef CHARGESIM_PARALLEL_HPP
#define CHARGESIM_PARALLEL_HPP

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace chargesim {

inline int defaultWorkers() {
  if (const char* env = std::getenv("CHARGESIM_WORKERS")) {
    const int n = std::atoi(env);
    if (n >= 1)
      return n;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? int(hc) : 1;
}

/// Run fn(i) for i in [0, n) on nWorkers threads pulling from a shared
/// counter. Results must be written into per-index slots by the caller, so
/// output is independent of scheduling; nWorkers only affects wall time.
template <class Fn>
void parallelFor(int nWorkers, std::int64_t n, Fn&& fn) {
  if (nWorkers < 1)
    throw std::invalid_argument("parallelFor: nWorkers must be >= 1");
  if (nWorkers == 1 || n <= 1) {
    for (std::int64_t i = 0; i < n; ++i)
      fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::exception_ptr error;
  std::mutex errorMutex;
  auto worker = [&] {
    for (;;) {
      const std::int64_t i = next.fetch_add(1);
      if (i >= n)
        return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(errorMutex);
        if (!error)
          error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(nWorkers);
  for (int w = 0; w < nWorkers; ++w)
    pool.emplace_back(worker);
  for (auto& t : pool)
    t.join();
  if (error)
    std::rethrow_exception(error);
}

} // namespace chargesim

#endif // CHARGESIM_PARALLEL_HPP
