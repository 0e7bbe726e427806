#pragma once

#include <cstdint>
#include <vector>

#include "fednids/rng.hpp"
#include "fednids/tensor.hpp"

namespace fednids {

// One fully connected layer: y = x W^T + b, W is out x in, b is 1 x out.
struct LayerParams {
  Tensor W;
  Tensor b;
};

struct ModelParams {
  std::vector<LayerParams> layers;

  size_t param_count() const {
    size_t n = 0;
    for (const auto& l : layers) n += l.W.size() + l.b.size();
    return n;
  }
  bool same_arch(const ModelParams& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (size_t i = 0; i < layers.size(); ++i)
      if (!layers[i].W.same_shape(o.layers[i].W) || !layers[i].b.same_shape(o.layers[i].b)) return false;
    return true;
  }
};

// uniform(-1/sqrt(in), 1/sqrt(in)) per layer
inline ModelParams init_params(const std::vector<int>& dims, Rng& rng) {
  ModelParams p;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    int in = dims[i], out = dims[i + 1];
    double s = 1.0 / std::sqrt(static_cast<double>(in));
    LayerParams l;
    l.W = uniform_tensor(rng, out, in, -s, s);
    l.b = uniform_tensor(rng, 1, out, -s, s);
    p.layers.push_back(std::move(l));
  }
  return p;
}

// Flat layer-indexed gradient snapshot in W0, b0, W1, b1, ... order. Defenses
// operate on the flat view; per-layer tensors are slices of it.
struct GradientVector {
  struct Slot {
    int rows = 0;
    int cols = 0;
    size_t offset = 0;
  };
  std::vector<double> flat;
  std::vector<Slot> slots;

  static GradientVector like(const ModelParams& p) {
    GradientVector g;
    size_t off = 0;
    for (const auto& l : p.layers) {
      g.slots.push_back({l.W.rows(), l.W.cols(), off});
      off += l.W.size();
      g.slots.push_back({l.b.rows(), l.b.cols(), off});
      off += l.b.size();
    }
    g.flat.assign(off, 0.0);
    return g;
  }

  int count() const { return static_cast<int>(slots.size()); }
  Tensor tensor(int i) const {
    const Slot& s = slots[static_cast<size_t>(i)];
    Tensor t(s.rows, s.cols);
    for (size_t j = 0; j < t.size(); ++j) t[j] = flat[s.offset + j];
    return t;
  }
  void set_tensor(int i, const Tensor& t) {
    const Slot& s = slots[static_cast<size_t>(i)];
    if (t.rows() != s.rows || t.cols() != s.cols)
      fail("gradient_vector: slot shape mismatch " + t.shape_str());
    for (size_t j = 0; j < t.size(); ++j) flat[s.offset + j] = t[j];
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : flat) m = std::max(m, std::fabs(v));
    return m;
  }
  double l2() const {
    double s = 0.0;
    for (double v : flat) s += v * v;
    return std::sqrt(s);
  }
  bool all_finite() const {
    for (double v : flat)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// Standard Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8.
struct AdamState {
  int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState like(size_t n) {
    AdamState s;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    return s;
  }
};

// params -= lr * mhat / (sqrt(vhat) + eps), elementwise over the flat layout.
void adam_step(ModelParams& params, const GradientVector& grads, AdamState& state, double lr);

// Same update for free tensors (attack/defense variables).
void adam_step(Tensor& x, const Tensor& grad, AdamState& state, double lr);

// One plain gradient descent step.
void sgd_step(ModelParams& params, const GradientVector& grads, double lr);

}  // namespace fednids
