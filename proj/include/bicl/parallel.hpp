#pragma once

#include <exception>
#include <limits>

namespace bicl {

/// Runs fn(i) for i in [0, n) across OpenMP threads. If any call throws, the
/// exception from the lowest failing index is rethrown after the loop.
template <class Fn>
void parallel_for(int n, Fn&& fn) {
  std::exception_ptr failure;
  int failed_at = std::numeric_limits<int>::max();
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
#pragma omp critical(bicl_parallel_failure)
      if (i < failed_at) {
        failed_at = i;
        failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace bicl
