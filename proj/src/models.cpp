#include "fednids/models.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "fednids/kernels.hpp"
#include "json.hpp"

namespace fednids {

BoundParams bind_params(Graph& g, const ModelParams& p) {
  BoundParams bp;
  for (const auto& l : p.layers) {
    bp.values.push_back(g.leaf(l.W));
    bp.values.push_back(g.leaf(l.b));
  }
  return bp;
}

Mlp Mlp::make(std::vector<int> dims, uint64_t seed, Activation output) {
  Mlp m;
  m.dims = std::move(dims);
  Rng rng = make_rng(seed);
  m.params = init_params(m.dims, rng);
  m.output = output;
  return m;
}

Mlp make_classifier(int dim, int n_classes, uint64_t seed) {
  return Mlp::make({dim, 2 * dim, 3 * dim, n_classes}, seed);
}

Value Mlp::forward(Graph&, Value x, const BoundParams& bp) const {
  if (x.val().cols() != dims.front())
    fail("mlp: input dim " + x.val().shape_str() + " does not match model dim " +
         std::to_string(dims.front()));
  Value h = x;
  size_t n_layers = params.layers.size();
  for (size_t i = 0; i < n_layers; ++i) {
    Value W = bp.values[2 * i];
    Value b = bp.values[2 * i + 1];
    Value z = add(matmul(h, transpose(W)), broadcast_rows(b, h.val().rows()));
    if (i + 1 < n_layers) {
      h = relu(z);
    } else {
      switch (output) {
        case Activation::Relu: h = relu(z); break;
        case Activation::Sigmoid: h = sigmoid(z); break;
        case Activation::Linear: h = z; break;
      }
    }
  }
  return h;
}

Tensor Mlp::forward_values(const Tensor& x) const {
  if (x.cols() != dims.front())
    fail("mlp: input dim " + x.shape_str() + " does not match model dim " + std::to_string(dims.front()));
  Tensor h = x;
  size_t n_layers = params.layers.size();
  for (size_t i = 0; i < n_layers; ++i) {
    const Tensor& W = params.layers[i].W;
    const Tensor& b = params.layers[i].b;
    Tensor z(h.rows(), W.rows());
    // z = h * W^T
    for (int r = 0; r < h.rows(); ++r)
      for (int o = 0; o < W.rows(); ++o) {
        double s = b.at(0, o);
        for (int c = 0; c < h.cols(); ++c) s += h.at(r, c) * W.at(o, c);
        z.at(r, o) = s;
      }
    bool last = (i + 1 == n_layers);
    if (!last || output == Activation::Relu) {
      for (size_t j = 0; j < z.size(); ++j) z[j] = std::max(z[j], 0.0);
    } else if (last && output == Activation::Sigmoid) {
      for (size_t j = 0; j < z.size(); ++j)
        z[j] = z[j] >= 0 ? 1.0 / (1.0 + std::exp(-z[j])) : std::exp(z[j]) / (1.0 + std::exp(z[j]));
    }
    h = std::move(z);
  }
  return h;
}

Value ce_loss(Value logits, Value y_soft) {
  if (!logits.val().same_shape(y_soft.val()))
    fail("ce_loss: logits " + logits.val().shape_str() + " vs targets " + y_soft.val().shape_str());
  Value lp = log_softmax_rows(logits);
  return mul_const(sum_all(mul(y_soft, lp)), -1.0 / logits.val().rows());
}

double ce_loss_value(const Mlp& model, const Tensor& x, const Tensor& y) {
  Graph g;
  BoundParams bp = bind_params(g, model.params);
  Value loss = ce_loss(model.forward(g, g.leaf(x), bp), g.leaf(y));
  return loss.val()[0];
}

Tensor classify(const Mlp& model, const Tensor& x) {
  Tensor z = model.forward_values(x);
  Tensor p(z.rows(), z.cols());
  for (int r = 0; r < z.rows(); ++r) {
    double m = z.at(r, 0);
    for (int c = 1; c < z.cols(); ++c) m = std::max(m, z.at(r, c));
    double s = 0.0;
    for (int c = 0; c < z.cols(); ++c) {
      p.at(r, c) = std::exp(z.at(r, c) - m);
      s += p.at(r, c);
    }
    for (int c = 0; c < z.cols(); ++c) p.at(r, c) /= s;
  }
  return p;
}

std::vector<int> predict(const Mlp& model, const Tensor& x) {
  Tensor z = model.forward_values(x);
  std::vector<int> out(static_cast<size_t>(z.rows()));
  for (int r = 0; r < z.rows(); ++r) out[static_cast<size_t>(r)] = z.argmax_row(r);
  return out;
}

double accuracy(const Mlp& model, const Tensor& x, const Tensor& y_onehot) {
  if (x.rows() == 0) return 0.0;
  std::vector<int> pred = predict(model, x);
  int hit = 0;
  for (int r = 0; r < x.rows(); ++r)
    if (pred[static_cast<size_t>(r)] == y_onehot.argmax_row(r)) ++hit;
  return static_cast<double>(hit) / x.rows();
}

GradientVector model_gradient(const Mlp& model, const Tensor& x, const Tensor& y) {
  Graph g;
  BoundParams bp = bind_params(g, model.params);
  Value loss = ce_loss(model.forward(g, g.leaf(x), bp), g.leaf(y));
  std::vector<Value> gs = grad(loss, bp.values);
  GradientVector gv = GradientVector::like(model.params);
  for (int i = 0; i < gv.count(); ++i) gv.set_tensor(i, gs[static_cast<size_t>(i)].val());
  return gv;
}

AnomalyAutoencoder AnomalyAutoencoder::make(int dim, uint64_t seed) {
  AnomalyAutoencoder ae;
  ae.net = Mlp::make({dim, std::max(1, dim / 2), dim}, seed);
  return ae;
}

Tensor anomaly_scores(const AnomalyAutoencoder& ae, const Tensor& x) {
  Tensor rec = ae.net.forward_values(x);
  Tensor s(x.rows(), 1);
  for (int r = 0; r < x.rows(); ++r) {
    double acc = 0.0;
    for (int c = 0; c < x.cols(); ++c) {
      double d = x.at(r, c) - rec.at(r, c);
      acc += d * d;
    }
    s.at(r, 0) = std::sqrt(acc / x.cols());
  }
  return s;
}

Value anomaly_scores_value(const AnomalyAutoencoder& ae, Graph& g, Value x) {
  BoundParams bp = bind_params(g, ae.net.params);
  Value rec = ae.net.forward(g, x, bp);
  Value d = sub(x, rec);
  return sqrt(mul_const(sum_cols(mul(d, d)), 1.0 / x.val().cols()));
}

namespace {

// one Adam minibatch epoch over shuffled rows; loss = mean squared error
double ae_epoch(AnomalyAutoencoder& ae, const Tensor& benign, int batch, double lr, AdamState& st, Rng& rng) {
  std::vector<int> order(static_cast<size_t>(benign.rows()));
  for (int i = 0; i < benign.rows(); ++i) order[static_cast<size_t>(i)] = i;
  std::shuffle(order.begin(), order.end(), rng);
  double total = 0.0;
  int batches = 0;
  for (int start = 0; start < benign.rows(); start += batch) {
    int bs = std::min(batch, benign.rows() - start);
    Tensor xb(bs, benign.cols());
    for (int r = 0; r < bs; ++r)
      for (int c = 0; c < benign.cols(); ++c) xb.at(r, c) = benign.at(order[static_cast<size_t>(start + r)], c);
    Graph g;
    BoundParams bp = bind_params(g, ae.net.params);
    Value rec = ae.net.forward(g, g.leaf(xb), bp);
    Value d = sub(rec, g.leaf(xb));
    Value loss = mean_all(mul(d, d));
    std::vector<Value> gs = grad(loss, bp.values);
    GradientVector gv = GradientVector::like(ae.net.params);
    for (int i = 0; i < gv.count(); ++i) gv.set_tensor(i, gs[static_cast<size_t>(i)].val());
    adam_step(ae.net.params, gv, st, lr);
    total += loss.val()[0];
    ++batches;
  }
  return batches > 0 ? total / batches : 0.0;
}

}  // namespace

void train_autoencoder(AnomalyAutoencoder& ae, const Tensor& benign, const AeTrainConfig& cfg, Rng& rng) {
  if (benign.rows() == 0) fail("train_autoencoder: empty benign set");
  AdamState st = AdamState::like(ae.net.params.param_count());
  for (int e = 0; e < cfg.epochs; ++e) ae_epoch(ae, benign, cfg.batch, cfg.lr, st, rng);
}

double calibrate_threshold(AnomalyAutoencoder& ae, const Tensor& benign, double quantile) {
  if (benign.rows() == 0) fail("calibrate_threshold: empty benign set");
  Tensor s = anomaly_scores(ae, benign);
  std::vector<double> v(s.data(), s.data() + s.size());
  std::sort(v.begin(), v.end());
  double idx = quantile * (static_cast<double>(v.size()) - 1.0);
  size_t lo = static_cast<size_t>(idx);
  size_t hi = std::min(lo + 1, v.size() - 1);
  double w = idx - static_cast<double>(lo);
  ae.threshold = v[lo] * (1.0 - w) + v[hi] * w;
  return ae.threshold;
}

GanPair GanPair::make(int dim, uint64_t seed, int noise_dim) {
  GanPair gan;
  gan.noise_dim = noise_dim;
  gan.generator = Mlp::make({noise_dim, 128, 128, dim}, mix_seed(seed ^ 0x67656eULL), Activation::Sigmoid);
  gan.discriminator = Mlp::make({dim, 128, 128, 1}, mix_seed(seed ^ 0x646973ULL));
  return gan;
}

Tensor gan_generate(const GanPair& gan, int n, Rng& rng) {
  Tensor z = normal_tensor(rng, n, gan.noise_dim);
  return gan.generator.forward_values(z);
}

std::vector<GanEpochStats> gan_train(GanPair& gan, const Tensor& benign, const GanTrainConfig& cfg,
                                     Rng& rng, const std::function<void(int, const Tensor&)>& on_epoch) {
  if (benign.rows() < 2) fail("gan_train: need at least 2 benign samples");
  AdamState d_state = AdamState::like(gan.discriminator.params.param_count());
  AdamState g_state = AdamState::like(gan.generator.params.param_count());
  std::vector<GanEpochStats> stats;
  int batch = std::min(cfg.batch, benign.rows());
  std::vector<int> order(static_cast<size_t>(benign.rows()));
  for (int i = 0; i < benign.rows(); ++i) order[static_cast<size_t>(i)] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double d_total = 0.0, g_total = 0.0;
    int steps = 0;
    for (int start = 0; start + batch <= benign.rows(); start += batch) {
      Tensor real(batch, benign.cols());
      for (int r = 0; r < batch; ++r)
        for (int c = 0; c < benign.cols(); ++c) real.at(r, c) = benign.at(order[static_cast<size_t>(start + r)], c);
      Tensor noise = normal_tensor(rng, batch, gan.noise_dim);

      // discriminator: mean softplus(-l_real) + mean softplus(l_fake)
      {
        Tensor fake = gan.generator.forward_values(noise);
        Graph g;
        BoundParams dbp = bind_params(g, gan.discriminator.params);
        Value l_real = gan.discriminator.forward(g, g.leaf(real), dbp);
        Value l_fake = gan.discriminator.forward(g, g.leaf(fake), dbp);
        Value loss = add(mean_all(softplus(mul_const(l_real, -1.0))), mean_all(softplus(l_fake)));
        std::vector<Value> gs = grad(loss, dbp.values);
        GradientVector gv = GradientVector::like(gan.discriminator.params);
        for (int i = 0; i < gv.count(); ++i) gv.set_tensor(i, gs[static_cast<size_t>(i)].val());
        adam_step(gan.discriminator.params, gv, d_state, cfg.lr);
        d_total += loss.val()[0];
      }
      // generator (non-saturating): mean softplus(-D(G(z)))
      {
        Graph g;
        BoundParams gbp = bind_params(g, gan.generator.params);
        BoundParams dbp = bind_params(g, gan.discriminator.params);
        Value fake = gan.generator.forward(g, g.leaf(noise), gbp);
        Value l_fake = gan.discriminator.forward(g, fake, dbp);
        Value loss = mean_all(softplus(mul_const(l_fake, -1.0)));
        std::vector<Value> gs = grad(loss, gbp.values);
        GradientVector gv = GradientVector::like(gan.generator.params);
        for (int i = 0; i < gv.count(); ++i) gv.set_tensor(i, gs[static_cast<size_t>(i)].val());
        adam_step(gan.generator.params, gv, g_state, cfg.lr);
        g_total += loss.val()[0];
      }
      ++steps;
    }
    GanEpochStats s;
    s.epoch = epoch;
    s.d_loss = steps > 0 ? d_total / steps : 0.0;
    s.g_loss = steps > 0 ? g_total / steps : 0.0;
    stats.push_back(s);
    if (on_epoch) {
      Tensor samples = gan_generate(gan, cfg.eval_samples, rng);
      on_epoch(epoch, samples);
    }
  }
  return stats;
}

void save_mlp(const std::string& path, const Mlp& m, double threshold, bool has_threshold) {
  nlohmann::json hdr;
  hdr["version"] = 1;
  hdr["dims"] = m.dims;
  hdr["output"] = static_cast<int>(m.output);
  if (has_threshold) hdr["threshold"] = threshold;
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("save_mlp: cannot open " + path);
  f << hdr.dump() << "\n";
  for (const auto& l : m.params.layers) {
    f.write(reinterpret_cast<const char*>(l.W.data()), static_cast<std::streamsize>(l.W.size() * sizeof(double)));
    f.write(reinterpret_cast<const char*>(l.b.data()), static_cast<std::streamsize>(l.b.size() * sizeof(double)));
  }
  if (!f) fail("save_mlp: write failed for " + path);
}

Mlp load_mlp(const std::string& path, double* threshold) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("load_mlp: cannot open " + path);
  std::string line;
  std::getline(f, line);
  nlohmann::json hdr = nlohmann::json::parse(line);
  Mlp m;
  m.dims = hdr.at("dims").get<std::vector<int>>();
  m.output = static_cast<Activation>(hdr.at("output").get<int>());
  if (threshold != nullptr) *threshold = hdr.value("threshold", 0.0);
  for (size_t i = 0; i + 1 < m.dims.size(); ++i) {
    LayerParams l;
    l.W = Tensor(m.dims[i + 1], m.dims[i]);
    l.b = Tensor(1, m.dims[i + 1]);
    f.read(reinterpret_cast<char*>(l.W.data()), static_cast<std::streamsize>(l.W.size() * sizeof(double)));
    f.read(reinterpret_cast<char*>(l.b.data()), static_cast<std::streamsize>(l.b.size() * sizeof(double)));
    m.params.layers.push_back(std::move(l));
  }
  if (!f) fail("load_mlp: truncated checkpoint " + path);
  return m;
}

}  // namespace fednids
