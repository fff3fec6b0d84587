#include "gsdtta/parallel.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>

// OpenBLAS is used for the eigensolver; keep it single-threaded so results
// do not depend on its internal partitioning. Weak so other BLAS builds link.
extern "C" void openblas_set_num_threads(int) __attribute__((weak));

namespace gsdtta {

namespace {

int initial_threads() {
  if (openblas_set_num_threads != nullptr) openblas_set_num_threads(1);
  return default_threads();
}

std::atomic<int>& thread_setting() {
  static std::atomic<int> threads{initial_threads()};
  return threads;
}

}  // namespace

int default_threads() {
  if (const char* env = std::getenv("GSDTTA_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return v;
    } catch (...) {
    }
  }
  return std::max(1, omp_get_num_procs());
}

int num_threads() { return thread_setting().load(); }

void set_num_threads(int threads) { thread_setting().store(std::max(1, threads)); }

}  // namespace gsdtta
