#include "fednids/fl.hpp"

#include <chrono>
#include <cmath>
#include <map>

namespace fednids {

void FlConfig::validate(int n_shards) const {
  if (clients < 1) fail("fl: clients must be >= 1");
  if (n_shards != clients) fail("fl: shard count != clients");
  if (sample_k < 1 || sample_k > clients) fail("fl: need 1 <= K <= N");
  if (local_steps < 1) fail("fl: local steps must be >= 1");
  if (rounds < 1) fail("fl: rounds must be >= 1");
  if (batch < 1) fail("fl: batch must be >= 1");
  if (!weights.empty()) {
    if (static_cast<int>(weights.size()) != clients) fail("fl: weights size != clients");
    double s = 0.0;
    for (double w : weights) {
      if (w < 0) fail("fl: weights must be non-negative");
      s += w;
    }
    if (std::fabs(s - 1.0) > 1e-12) fail("fl: weights must sum to 1");
  }
}

std::vector<double> FlConfig::sampling_weights() const {
  if (!weights.empty()) return weights;
  return std::vector<double>(static_cast<size_t>(clients), 1.0 / clients);
}

double FlConfig::lr_at_round(int round) const {
  return lr * std::pow(decay, static_cast<double>(round / decay_every));
}

LocalUpdateResult local_update(const Mlp& global_model, const Dataset& shard, const Defense& defense,
                               int local_steps, int batch, double lr, LocalOptimizer opt, Rng& rng) {
  if (shard.rows() == 0) fail("local_update: empty shard");
  Mlp model = global_model;
  AdamState adam = AdamState::like(model.params.param_count());
  std::uniform_int_distribution<int> pick(0, shard.rows() - 1);
  double total_loss = 0.0;

  for (int step = 0; step < local_steps; ++step) {
    int bs = std::min(batch, shard.rows());
    Tensor x(bs, shard.dim());
    Tensor y(bs, shard.classes());
    for (int r = 0; r < bs; ++r) {
      int src = batch >= shard.rows() ? r : pick(rng);
      for (int c = 0; c < shard.dim(); ++c) x.at(r, c) = shard.X.at(src, c);
      for (int c = 0; c < shard.classes(); ++c) y.at(r, c) = shard.Y.at(src, c);
    }
    defense.transform_batch(model, x, y, rng);
    GradientVector grad = model_gradient(model, x, y);
    double loss = ce_loss_value(model, x, y);
    if (!std::isfinite(loss)) fail("local_update: non-finite loss at step " + std::to_string(step));
    defense.transform_gradient(grad, rng);
    if (opt == LocalOptimizer::Adam)
      adam_step(model.params, grad, adam, lr);
    else
      sgd_step(model.params, grad, lr);
    total_loss += loss;
  }
  return {std::move(model.params), total_loss / local_steps};
}

ModelParams aggregate(const std::vector<const ModelParams*>& models) {
  if (models.empty()) fail("aggregate: empty set");
  ModelParams out = *models[0];
  for (size_t i = 1; i < models.size(); ++i)
    if (!models[i]->same_arch(out)) fail("aggregate: architecture mismatch");
  double inv = 1.0 / static_cast<double>(models.size());
  for (size_t l = 0; l < out.layers.size(); ++l) {
    for (size_t j = 0; j < out.layers[l].W.size(); ++j) {
      double s = 0.0;
      for (const ModelParams* m : models) s += m->layers[l].W[j];
      out.layers[l].W[j] = s * inv;
    }
    for (size_t j = 0; j < out.layers[l].b.size(); ++j) {
      double s = 0.0;
      for (const ModelParams* m : models) s += m->layers[l].b[j];
      out.layers[l].b[j] = s * inv;
    }
  }
  return out;
}

FlResult train(const FlConfig& cfg, const std::vector<Dataset>& shards, const Dataset& test,
               const Defense& defense) {
  cfg.validate(static_cast<int>(shards.size()));
  for (const auto& s : shards)
    if (s.rows() == 0) fail("fl: empty client shard");

  FlResult result;
  result.model = make_classifier(shards[0].dim(), shards[0].classes(), cfg.seed);
  std::vector<double> p = cfg.sampling_weights();
  std::discrete_distribution<int> sampler(p.begin(), p.end());

  for (int round = 0; round < cfg.rounds; ++round) {
    auto t0 = std::chrono::steady_clock::now();
    double lr = cfg.lr_at_round(round);

    Rng sample_rng = make_rng(cfg.seed, 0x5a11, static_cast<uint64_t>(round));
    std::vector<int> sampled(static_cast<size_t>(cfg.sample_k));
    for (int i = 0; i < cfg.sample_k; ++i) sampled[static_cast<size_t>(i)] = sampler(sample_rng);

    // duplicates rerun nothing: the per-client stream is (seed, round, client),
    // so a client sampled twice contributes the identical model twice
    std::map<int, LocalUpdateResult> updates;
    double loss_sum = 0.0;
    for (int k : sampled) {
      if (!updates.count(k)) {
        Rng rng = make_rng(cfg.seed, static_cast<uint64_t>(round) + 1, static_cast<uint64_t>(k) + 1);
        updates.emplace(k, local_update(result.model, shards[static_cast<size_t>(k)], defense,
                                        cfg.local_steps, cfg.batch, lr, cfg.optimizer, rng));
      }
      loss_sum += updates.at(k).mean_loss;
    }
    std::vector<const ModelParams*> to_avg;
    to_avg.reserve(sampled.size());
    for (int k : sampled) to_avg.push_back(&updates.at(k).params);
    result.model.params = aggregate(to_avg);

    RoundRecord rec;
    rec.round = round;
    rec.sampled = sampled;
    rec.mean_loss = loss_sum / cfg.sample_k;
    rec.lr = lr;
    bool last = (round + 1 == cfg.rounds);
    if (cfg.eval_every_round || last) rec.test_acc = accuracy(result.model, test.X, test.Y);
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.rounds.push_back(std::move(rec));
  }
  return result;
}

}  // namespace fednids
