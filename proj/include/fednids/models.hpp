#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fednids/graph.hpp"
#include "fednids/params.hpp"

namespace fednids {

// Parameters bound into a graph as leaves, so grad() can target them.
struct BoundParams {
  std::vector<Value> values;  // W0, b0, W1, b1, ... matching GradientVector order
};

BoundParams bind_params(Graph& g, const ModelParams& p);

enum class Activation { Relu, Sigmoid, Linear };

// Plain fully connected net: y = relu(...relu(x W0^T + b0)... ) with a
// configurable output activation; logits by default.
struct Mlp {
  std::vector<int> dims;
  ModelParams params;
  Activation output = Activation::Linear;

  static Mlp make(std::vector<int> dims, uint64_t seed, Activation output = Activation::Linear);

  int in_dim() const { return dims.front(); }
  int out_dim() const { return dims.back(); }

  // graph path (differentiable)
  Value forward(Graph& g, Value x, const BoundParams& bp) const;
  // value path (no graph; evaluation loops use this)
  Tensor forward_values(const Tensor& x) const;
};

// layer sizes [dim, 2*dim, 3*dim, n]; relu on the two hidden layers, softmax
// applied by classify()/loss, not stored in the net.
Mlp make_classifier(int dim, int n_classes, uint64_t seed);

// soft-target cross entropy: -sum(y .* log_softmax(z)) / rows
Value ce_loss(Value logits, Value y_soft);
double ce_loss_value(const Mlp& model, const Tensor& x, const Tensor& y);

// rows sum to 1; argmax is the predicted class
Tensor classify(const Mlp& model, const Tensor& x);
std::vector<int> predict(const Mlp& model, const Tensor& x);
double accuracy(const Mlp& model, const Tensor& x, const Tensor& y_onehot);

// d ce_loss / d params at (x, y), as a flat gradient vector
GradientVector model_gradient(const Mlp& model, const Tensor& x, const Tensor& y);

// Surrogate anomaly detector: autoencoder [dim, dim/2, dim], relu hidden,
// linear output; anomaly score is the per-row RMSE of the reconstruction.
struct AnomalyAutoencoder {
  Mlp net;
  double threshold = 0.0;

  static AnomalyAutoencoder make(int dim, uint64_t seed);
};

Tensor anomaly_scores(const AnomalyAutoencoder& ae, const Tensor& x);  // rows x 1
// scores as a graph value (white-box attacks differentiate through this)
Value anomaly_scores_value(const AnomalyAutoencoder& ae, Graph& g, Value x);

struct AeTrainConfig {
  int epochs = 60;
  int batch = 64;
  double lr = 1e-3;
};
void train_autoencoder(AnomalyAutoencoder& ae, const Tensor& benign, const AeTrainConfig& cfg, Rng& rng);

// threshold = given quantile of the benign training scores (default 0.99)
double calibrate_threshold(AnomalyAutoencoder& ae, const Tensor& benign, double quantile = 0.99);

struct GanPair {
  Mlp generator;      // noise_dim -> [128,128] -> dim, sigmoid output
  Mlp discriminator;  // dim -> [128,128] -> 1 logit
  int noise_dim = 64;

  static GanPair make(int dim, uint64_t seed, int noise_dim = 64);
};

struct GanTrainConfig {
  int epochs = 100;
  int batch = 32;
  double lr = 1e-3;
  int eval_samples = 100;
};

// Alternating 1:1 discriminator/generator updates with the non-saturating
// generator loss. on_epoch receives the epoch index and a fresh batch of
// generated samples for external diagnostics (anomaly score, classifier acc).
struct GanEpochStats {
  int epoch = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
};
std::vector<GanEpochStats> gan_train(
    GanPair& gan, const Tensor& benign, const GanTrainConfig& cfg, Rng& rng,
    const std::function<void(int, const Tensor&)>& on_epoch = nullptr);

Tensor gan_generate(const GanPair& gan, int n, Rng& rng);

// checkpoint: one JSON header line (version, dims, output activation,
// threshold when present) then the raw little-endian float64 parameter blob.
void save_mlp(const std::string& path, const Mlp& m, double threshold = 0.0, bool has_threshold = false);
Mlp load_mlp(const std::string& path, double* threshold = nullptr);

}  // namespace fednids
