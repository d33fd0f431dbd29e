#pragma once

#include <cstddef>
#include <functional>

namespace hyper3d {

/// Sets the worker count used by the library (OpenMP and Eigen). Values < 1
/// are treated as 1.
void set_thread_count(int threads);
int thread_count();

/// Number of chunks parallel_chunks(n, ...) will use.
int chunk_count(std::size_t n);

/// Runs body(thread_index, begin, end) over a static, contiguous partition of
/// [0, n). The partition depends only on n and the thread count, so per-thread
/// partial results merged in thread order are reproducible.
void parallel_chunks(std::size_t n,
                     const std::function<void(int, std::size_t, std::size_t)>& body);

}  // namespace hyper3d
