#pragma once

#include <vector>

#include "fednids/data.hpp"
#include "fednids/defenses.hpp"
#include "fednids/models.hpp"

namespace fednids {

enum class LocalOptimizer { Sgd, Adam };

struct FlConfig {
  int clients = 10;        // N
  int sample_k = 10;       // K drawn with replacement each round
  int local_steps = 1;     // E
  int rounds = 100;        // T
  int batch = 32;          // local_bs
  double lr = 1e-2;
  double decay = 0.9;      // lr <- lr * decay every decay_every rounds
  int decay_every = 20;
  std::vector<double> weights;  // p_k, uniform when empty
  uint64_t seed = 1;
  LocalOptimizer optimizer = LocalOptimizer::Adam;
  bool eval_every_round = true;

  void validate(int n_shards) const;
  std::vector<double> sampling_weights() const;
  double lr_at_round(int round) const;
};

struct RoundRecord {
  int round = 0;
  std::vector<int> sampled;  // S_t, duplicates allowed
  double test_acc = 0.0;
  double mean_loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;  // logged to a sidecar, never part of canonical exports
};

struct FlResult {
  Mlp model;
  std::vector<RoundRecord> rounds;
};

// E local steps from theta_global on the client's shard. Per-step: sample a
// batch, apply the defense input hook, compute the gradient, apply the
// defense gradient hook, step.
struct LocalUpdateResult {
  ModelParams params;
  double mean_loss = 0.0;
};
LocalUpdateResult local_update(const Mlp& global_model, const Dataset& shard, const Defense& defense,
                               int local_steps, int batch, double lr, LocalOptimizer opt, Rng& rng);

// parameter-wise mean; duplicates in the sampled multiset count twice
ModelParams aggregate(const std::vector<const ModelParams*>& models);

FlResult train(const FlConfig& cfg, const std::vector<Dataset>& shards, const Dataset& test,
               const Defense& defense);

}  // namespace fednids
