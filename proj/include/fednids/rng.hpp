#pragma once

#include <cstdint>
#include <random>

#include "fednids/tensor.hpp"

namespace fednids {

using Rng = std::mt19937_64;

// splitmix64 mix; used to derive independent substreams from (seed, a, b, c)
// so per-client / per-round / per-sample results are schedule independent.
inline uint64_t mix_seed(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(uint64_t seed, uint64_t a = 0, uint64_t b = 0, uint64_t c = 0) {
  uint64_t s = mix_seed(seed);
  s = mix_seed(s ^ mix_seed(a + 1));
  s = mix_seed(s ^ mix_seed(b + 2));
  s = mix_seed(s ^ mix_seed(c + 3));
  return Rng(s);
}

inline Tensor uniform_tensor(Rng& rng, int rows, int cols, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(rows, cols);
  for (size_t i = 0; i < t.size(); ++i) t[i] = d(rng);
  return t;
}

inline Tensor normal_tensor(Rng& rng, int rows, int cols, double mean = 0.0, double sd = 1.0) {
  std::normal_distribution<double> d(mean, sd);
  Tensor t(rows, cols);
  for (size_t i = 0; i < t.size(); ++i) t[i] = d(rng);
  return t;
}

inline double laplace_draw(Rng& rng, double location, double scale) {
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  double u = d(rng);
  double mag = -scale * std::log(1.0 - 2.0 * std::fabs(u));
  return location + (u < 0 ? -mag : mag);
}

}  // namespace fednids
