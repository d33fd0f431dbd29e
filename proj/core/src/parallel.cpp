#include "hyper3d/parallel.hpp"

#include <Eigen/Core>
#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hyper3d {
namespace {
int g_threads = 1;
}

void set_thread_count(int threads) {
  g_threads = std::max(1, threads);
  // parallelism lives at the sample level; keep Eigen's kernels serial
  Eigen::setNbThreads(1);
#ifdef _OPENMP
  omp_set_num_threads(g_threads);
#endif
}

int thread_count() { return g_threads; }

int chunk_count(std::size_t n) {
  return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(g_threads),
                                                std::max<std::size_t>(n, 1)));
}

void parallel_chunks(std::size_t n,
                     const std::function<void(int, std::size_t, std::size_t)>& body) {
  const int threads = chunk_count(n);
  if (threads <= 1) {
    body(0, 0, n);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static, 1) num_threads(threads)
  for (int t = 0; t < threads; ++t) {
    const std::size_t begin = n * static_cast<std::size_t>(t) / static_cast<std::size_t>(threads);
    const std::size_t end = n * static_cast<std::size_t>(t + 1) / static_cast<std::size_t>(threads);
    body(t, begin, end);
  }
#else
  for (int t = 0; t < threads; ++t) {
    const std::size_t begin = n * static_cast<std::size_t>(t) / static_cast<std::size_t>(threads);
    const std::size_t end = n * static_cast<std::size_t>(t + 1) / static_cast<std::size_t>(threads);
    body(t, begin, end);
  }
#endif
}

}  // namespace hyper3d
