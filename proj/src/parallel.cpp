#include "eigenloc/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace eigenloc {
namespace {

std::atomic<unsigned> g_threads{0};

unsigned resolved_threads() {
  unsigned n = g_threads.load();
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

// Runs task(worker) on `workers` threads, rethrowing the first exception.
void run_workers(unsigned workers, const std::function<void(unsigned)>& task) {
  if (workers <= 1) {
    task(0);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          task(w);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

void set_thread_count(unsigned n) { g_threads.store(n); }

unsigned thread_count() { return resolved_threads(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  const auto workers = static_cast<unsigned>(std::min<std::size_t>(resolved_threads(), n));
  const std::size_t chunk = (n + workers - 1) / workers;
  run_workers(workers, [&](unsigned w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin < end) fn(begin, end);
  });
}

void parallel_blocks(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  const std::size_t blocks = block_count(n);
  parallel_for(blocks, [&](std::size_t b0, std::size_t b1) {
    for (std::size_t b = b0; b < b1; ++b) {
      const std::size_t begin = b * kReduceBlock;
      fn(b, begin, std::min(n, begin + kReduceBlock));
    }
  });
}

}  // namespace eigenloc
