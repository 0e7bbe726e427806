#pragma once

#include <cstddef>

// Dense kernels behind the graph ops. Each kernel has a naive serial reference
// in kernels::serial and an OpenMP-parallel version dispatched from the top
// level. Accumulation order is identical in both (ascending k per output
// element, no parallel reductions), so results are bit-identical regardless of
// thread count. tools/bench_kernels compares their throughput.

namespace fednids::kernels {

namespace serial {

// C (m x n) = A (m x k) * B (k x n)
inline void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += a[static_cast<size_t>(i) * k + p] * b[static_cast<size_t>(p) * n + j];
      c[static_cast<size_t>(i) * n + j] = s;
    }
}

template <class F>
inline void map2(const double* a, const double* b, double* out, size_t n, F f) {
  for (size_t i = 0; i < n; ++i) out[i] = f(a[i], b[i]);
}

template <class F>
inline void map1(const double* a, double* out, size_t n, F f) {
  for (size_t i = 0; i < n; ++i) out[i] = f(a[i]);
}

}  // namespace serial

void set_parallel(bool enabled);
bool parallel_enabled();

// Work threshold below which the dispatchers stay serial (OpenMP fork overhead
// dominates on the tiny batch-1 graphs the attacks build).
inline constexpr size_t kParallelMinWork = 1u << 15;

void matmul(const double* a, const double* b, double* c, int m, int k, int n);

namespace detail {
bool use_parallel(size_t work);
void parallel_map_range(size_t n, void* ctx, void (*chunk)(void*, size_t, size_t));
}  // namespace detail

template <class F>
inline void map2(const double* a, const double* b, double* out, size_t n, F f) {
  if (!detail::use_parallel(n)) {
    serial::map2(a, b, out, n, f);
    return;
  }
  struct Ctx {
    const double* a;
    const double* b;
    double* out;
    F f;
  } ctx{a, b, out, f};
  detail::parallel_map_range(n, &ctx, [](void* p, size_t lo, size_t hi) {
    auto* c = static_cast<Ctx*>(p);
    for (size_t i = lo; i < hi; ++i) c->out[i] = c->f(c->a[i], c->b[i]);
  });
}

template <class F>
inline void map1(const double* a, double* out, size_t n, F f) {
  if (!detail::use_parallel(n)) {
    serial::map1(a, out, n, f);
    return;
  }
  struct Ctx {
    const double* a;
    double* out;
    F f;
  } ctx{a, out, f};
  detail::parallel_map_range(n, &ctx, [](void* p, size_t lo, size_t hi) {
    auto* c = static_cast<Ctx*>(p);
    for (size_t i = lo; i < hi; ++i) c->out[i] = c->f(c->a[i]);
  });
}

}  // namespace fednids::kernels
