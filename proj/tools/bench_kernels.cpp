// Throughput comparison between the serial reference kernels and the
// OpenMP-dispatched ones. Run: ./bench_kernels [repeats]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <vector>

#include "fednids/kernels.hpp"
#include "fednids/rng.hpp"

using fednids::Rng;
namespace kernels = fednids::kernels;

namespace {

double time_ms(const std::function<void()>& fn, int repeats) {
  fn();  // warm up
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < repeats; ++i) fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / repeats;
}

}  // namespace

int main(int argc, char** argv) {
  int repeats = argc > 1 ? std::atoi(argv[1]) : 5;
  Rng rng = fednids::make_rng(42);

  std::printf("%-24s %12s %12s %8s\n", "kernel", "serial(ms)", "parallel(ms)", "speedup");

  for (int n : {64, 128, 256, 512}) {
    std::vector<double> a(static_cast<size_t>(n) * n), b(a.size()), c(a.size()), c_ref(a.size());
    std::uniform_real_distribution<double> d(-1, 1);
    for (auto& v : a) v = d(rng);
    for (auto& v : b) v = d(rng);

    double ts = time_ms([&] { kernels::serial::matmul(a.data(), b.data(), c_ref.data(), n, n, n); }, repeats);
    kernels::set_parallel(true);
    double tp = time_ms([&] { kernels::matmul(a.data(), b.data(), c.data(), n, n, n); }, repeats);

    bool identical = c == c_ref;
    std::printf("matmul %4dx%-4d          %12.3f %12.3f %7.2fx %s\n", n, n, ts, tp, ts / tp,
                identical ? "" : "MISMATCH");
    if (!identical) return 1;
  }

  for (size_t n : {size_t{1} << 16, size_t{1} << 20, size_t{1} << 22}) {
    std::vector<double> a(n), out(n), out_ref(n);
    std::uniform_real_distribution<double> d(-4, 4);
    for (auto& v : a) v = d(rng);
    auto f = [](double x) { return x > 0 ? x : 0.0; };

    double ts = time_ms([&] { kernels::serial::map1(a.data(), out_ref.data(), n, f); }, repeats);
    kernels::set_parallel(true);
    double tp = time_ms([&] { kernels::map1(a.data(), out.data(), n, f); }, repeats);

    bool identical = out == out_ref;
    std::printf("relu map %-10zu       %12.3f %12.3f %7.2fx %s\n", n, ts, tp, ts / tp,
                identical ? "" : "MISMATCH");
    if (!identical) return 1;
  }
  return 0;
}
