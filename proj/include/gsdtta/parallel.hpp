#pragma once

#include <cstddef>
#include <exception>
#include <limits>
#include <mutex>

namespace gsdtta {

/// Thread count used by the batch-parallel regions. Defaults to the
/// GSDTTA_THREADS environment variable, else the available processors.
int num_threads();
void set_num_threads(int threads);
int default_threads();

/// Runs fn(i) for i in [0, n) with a static schedule. Every caller writes
/// results into per-index slots and reduces serially afterwards, so output
/// does not depend on the thread count. An exception from fn is rethrown on
/// the calling thread; with several, the one from the lowest index wins.
template <typename Fn>
void parallel_for(std::ptrdiff_t n, Fn&& fn) {
  const int threads = num_threads();
  std::exception_ptr error;
  std::ptrdiff_t error_index = std::numeric_limits<std::ptrdiff_t>::max();
  std::mutex mutex;
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1 && n > 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mutex);
      if (i < error_index) {
        error_index = i;
        error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace gsdtta
