#include "fednids/kernels.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fednids::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

namespace detail {

bool use_parallel(size_t work) {
#ifdef _OPENMP
  return g_parallel.load() && work >= kParallelMinWork && omp_get_max_threads() > 1;
#else
  (void)work;
  return false;
#endif
}

void parallel_map_range(size_t n, void* ctx, void (*chunk)(void*, size_t, size_t)) {
#ifdef _OPENMP
#pragma omp parallel
  {
    int nt = omp_get_num_threads();
    int tid = omp_get_thread_num();
    size_t per = (n + nt - 1) / nt;
    size_t lo = per * static_cast<size_t>(tid);
    size_t hi = lo + per < n ? lo + per : n;
    if (lo < hi) chunk(ctx, lo, hi);
  }
#else
  chunk(ctx, 0, n);
#endif
}

}  // namespace detail

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
  size_t work = static_cast<size_t>(m) * k * n;
  if (!detail::use_parallel(work)) {
    // ikj order: streams B rows, accumulates each c[i][j] in ascending p like
    // the reference, so the result is bit-identical to serial::matmul.
    for (int i = 0; i < m; ++i) {
      double* ci = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] = 0.0;
      for (int p = 0; p < k; ++p) {
        double aip = a[static_cast<size_t>(i) * k + p];
        const double* bp = b + static_cast<size_t>(p) * n;
        for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
      }
    }
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = 0.0;
    for (int p = 0; p < k; ++p) {
      double aip = a[static_cast<size_t>(i) * k + p];
      const double* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
#endif
}

}  // namespace fednids::kernels
