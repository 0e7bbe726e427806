#include "fednids/params.hpp"

namespace fednids {

namespace {

void adam_update(double* p, const double* g, size_t n, AdamState& state, double lr, size_t base) {
  double b1t = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double b2t = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < n; ++i) {
    double& m = state.m[base + i];
    double& v = state.v[base + i];
    m = state.beta1 * m + (1.0 - state.beta1) * g[i];
    v = state.beta2 * v + (1.0 - state.beta2) * g[i] * g[i];
    double mhat = m / b1t;
    double vhat = v / b2t;
    p[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

}  // namespace

void adam_step(ModelParams& params, const GradientVector& grads, AdamState& state, double lr) {
  if (state.m.size() != grads.flat.size())
    fail("adam_step: state size " + std::to_string(state.m.size()) + " vs gradient size " +
         std::to_string(grads.flat.size()));
  int slot = 0;
  for (auto& l : params.layers) {
    for (Tensor* t : {&l.W, &l.b}) {
      const auto& s = grads.slots[static_cast<size_t>(slot)];
      if (t->rows() != s.rows || t->cols() != s.cols)
        fail("adam_step: layer " + std::to_string(slot / 2) + " shape mismatch");
      for (size_t i = 0; i < t->size(); ++i)
        if (!std::isfinite(grads.flat[s.offset + i]))
          fail("adam_step: non-finite gradient in layer " + std::to_string(slot / 2) +
               (slot % 2 == 0 ? " (weight)" : " (bias)"));
      ++slot;
    }
  }
  state.step += 1;
  slot = 0;
  for (auto& l : params.layers) {
    for (Tensor* t : {&l.W, &l.b}) {
      const auto& s = grads.slots[static_cast<size_t>(slot)];
      adam_update(t->data(), grads.flat.data() + s.offset, t->size(), state, lr, s.offset);
      ++slot;
    }
  }
}

void adam_step(Tensor& x, const Tensor& grad, AdamState& state, double lr) {
  if (!x.same_shape(grad)) fail("adam_step: shape mismatch " + x.shape_str() + " vs " + grad.shape_str());
  if (state.m.size() != x.size()) fail("adam_step: state size mismatch");
  if (!grad.all_finite()) fail("adam_step: non-finite gradient");
  state.step += 1;
  adam_update(x.data(), grad.data(), x.size(), state, lr, 0);
}

void sgd_step(ModelParams& params, const GradientVector& grads, double lr) {
  int slot = 0;
  for (auto& l : params.layers) {
    for (Tensor* t : {&l.W, &l.b}) {
      const auto& s = grads.slots[static_cast<size_t>(slot)];
      if (t->rows() != s.rows || t->cols() != s.cols)
        fail("sgd_step: layer " + std::to_string(slot / 2) + " shape mismatch");
      for (size_t i = 0; i < t->size(); ++i) {
        double g = grads.flat[s.offset + i];
        if (!std::isfinite(g))
          fail("sgd_step: non-finite gradient in layer " + std::to_string(slot / 2));
        t->data()[i] -= lr * g;
      }
      ++slot;
    }
  }
}

}  // namespace fednids
