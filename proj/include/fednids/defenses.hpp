#pragma once

#include <string>

#include "fednids/models.hpp"

namespace fednids {

struct FedDefConfig {
  double alpha = 1.0;      // privacy/utility tradeoff (weights the gradient term)
  double delta = 1.0;      // input-distance target
  double epsilon = 0.0;    // gradient-distance budget
  double lr = 2e-1;        // def_lr
  int steps = 40;          // def_ep
  double g_value = 1e-15;  // early-stop threshold on max |pseudo gradient|
};

struct DpConfig {
  double location = 0.0;
  double variance = 0.1;
  bool scale_is_b = false;  // alternative reading: treat `variance` as the Laplace scale b
};

struct GpConfig {
  double rate = 0.99;  // fraction of smallest-magnitude entries zeroed
};

struct MixConfig {
  int k = 2;
  double flip_prob = 0.5;  // per-feature x -> 1-x flip
};

enum class DefenseKind { None, FedDef, Dp, Gp, Mix };

struct Defense {
  DefenseKind kind = DefenseKind::None;
  FedDefConfig feddef;
  DpConfig dp;
  GpConfig gp;
  MixConfig mix;

  static Defense none() { return Defense{}; }
  static Defense make_feddef(FedDefConfig c = {}) { return Defense{DefenseKind::FedDef, c, {}, {}, {}}; }
  static Defense make_dp(DpConfig c = {}) { return Defense{DefenseKind::Dp, {}, c, {}, {}}; }
  static Defense make_gp(GpConfig c = {}) { return Defense{DefenseKind::Gp, {}, {}, c, {}}; }
  static Defense make_mix(MixConfig c = {}) { return Defense{DefenseKind::Mix, {}, {}, {}, c}; }

  // input hook: (x, y) -> (x', y') before the gradient is taken
  void transform_batch(const Mlp& model, Tensor& x, Tensor& y, Rng& rng) const;
  // gradient hook: perturbs the gradient before the optimizer step
  void transform_gradient(GradientVector& grad, Rng& rng) const;

  std::string name() const;
};

Defense defense_from_name(const std::string& name);

struct FedDefResult {
  Tensor x;      // pseudo batch
  Tensor y;      // soft training target, softmax of the raw label variable
  Tensor y_raw;  // raw label variable the optimizer walked
  int steps_run = 0;
  bool early_stopped = false;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  double final_grad_dist = 0.0;  // ||grad(x',y') - grad(x,y)||_2 at return
};

// Pseudo-data transform: x',y' start uniform(0,1) and Adam-minimize
//   alpha * relu(||g(x',softmax(y')) - g(x,y)|| - eps)
//   + relu(delta - ||x'-x||) + sum_r |min(y'_r) - y'_r[gt_r]|
// with an early stop (checked before each step) once max|g| <= g_value. The
// pseudo gradient is taken on the normalized target; the hiding term pins the
// ground-truth coordinate of the raw variable to its minimum, and softmax
// keeps the ordering, so the shared gradient points the attacker away from gt.
FedDefResult feddef_transform(const Mlp& model, const Tensor& x, const Tensor& y,
                              const FedDefConfig& cfg, Rng& rng);

// objective of the expression above at a given (x', raw y'); test oracle hook
double feddef_objective(const Mlp& model, const Tensor& x, const Tensor& y, const Tensor& x2,
                        const Tensor& y2_raw, const FedDefConfig& cfg);

// i.i.d. Laplace(location, b) added elementwise; b = sqrt(variance/2)
void dp_perturb(GradientVector& grad, const DpConfig& cfg, Rng& rng);
void dp_perturb_flat(double* data, size_t n, const DpConfig& cfg, Rng& rng);

// zero the floor(rate * len) smallest absolute entries, ties by index order
void gp_prune(GradientVector& grad, double rate);
void gp_prune_flat(double* data, size_t n, double rate);

// each output row is a Dirichlet(1)-weighted convex combination of k sampled
// rows (features and labels alike); each feature flips x -> 1-x with flip_prob
void mix_transform(Tensor& x, Tensor& y, const MixConfig& cfg, Rng& rng);

}  // namespace fednids
