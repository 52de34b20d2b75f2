#include "gavatar/parallel.h"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gavatar {

namespace {

int default_workers() {
  if (const char* env = std::getenv("GAVATAR_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) {
      return n;
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::atomic<int>& workers_setting() {
  static std::atomic<int> workers{default_workers()};
  return workers;
}

} // namespace

int worker_count() { return workers_setting().load(); }

void set_worker_count(int workers) { workers_setting().store(std::max(1, workers)); }

void parallel_for(int begin, int end, const std::function<void(int, int)>& fn, int min_chunk) {
  if (end <= begin) {
    return;
  }
  const int n = end - begin;
  const int workers = std::min(worker_count(), std::max(1, n / std::max(1, min_chunk)));
  if (workers <= 1) {
    fn(begin, end);
    return;
  }
  const int chunks = workers * 4;
  const int chunk = (n + chunks - 1) / chunks;
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (;;) {
      const int c = next.fetch_add(1);
      const int lo = begin + c * chunk;
      if (lo >= end) {
        return;
      }
      try {
        fn(lo, std::min(end, lo + chunk));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) {
          error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) {
    pool.emplace_back(run);
  }
  run();
  for (auto& t : pool) {
    t.join();
  }
  if (error) {
    std::rethrow_exception(error);
  }
}

} // namespace gavatar
