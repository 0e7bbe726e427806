#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "fednids/data.hpp"
#include "fednids/models.hpp"
#include "test_util.hpp"

using namespace fednids;

namespace {

// plain centralized Adam training, used as a train/test split oracle
void train_centralized(Mlp& model, const Dataset& train, int steps, int batch, double lr,
                       uint64_t seed) {
  AdamState st = AdamState::like(model.params.param_count());
  Rng rng = make_rng(seed, 0xce);
  std::uniform_int_distribution<int> pick(0, train.rows() - 1);
  for (int e = 0; e < steps; ++e) {
    Tensor x(batch, train.dim()), y(batch, train.classes());
    for (int r = 0; r < batch; ++r) {
      int src = pick(rng);
      for (int c = 0; c < train.dim(); ++c) x.at(r, c) = train.X.at(src, c);
      for (int c = 0; c < train.classes(); ++c) y.at(r, c) = train.Y.at(src, c);
    }
    GradientVector g = model_gradient(model, x, y);
    adam_step(model.params, g, st, lr);
  }
}

std::vector<int> range_vec(int lo, int hi) {
  std::vector<int> idx;
  for (int i = lo; i < hi; ++i) idx.push_back(i);
  return idx;
}

}  // namespace

TEST_CASE("classifier probability rows sum to 1") {
  Mlp m = make_classifier(6, 4, 3);
  CHECK(m.dims == std::vector<int>{6, 12, 18, 4});
  Rng rng = make_rng(1);
  Tensor x = uniform_tensor(rng, 9, 6);
  Tensor p = classify(m, x);
  for (int r = 0; r < p.rows(); ++r) {
    double s = 0;
    for (int c = 0; c < p.cols(); ++c) s += p.at(r, c);
    CHECK(std::fabs(s - 1.0) <= 1e-9);
  }
}

TEST_CASE("zero-initialized model classifies uniformly") {
  Mlp m = make_classifier(5, 4, 3);
  for (auto& l : m.params.layers) {
    l.W = Tensor(l.W.rows(), l.W.cols());
    l.b = Tensor(l.b.rows(), l.b.cols());
  }
  Rng rng = make_rng(2);
  Tensor p = classify(m, uniform_tensor(rng, 3, 5));
  for (int r = 0; r < p.rows(); ++r)
    for (int c = 0; c < p.cols(); ++c) CHECK(p.at(r, c) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("input dim mismatch errors") {
  Mlp m = make_classifier(5, 2, 3);
  CHECK_THROWS_AS(classify(m, Tensor(2, 4)), Error);
}

TEST_CASE("trained desk-scale classifier beats 0.9 on held-out synthetic data") {
  SynthSpec spec;
  spec.dim = 8;
  spec.n_classes = 2;
  spec.rows = 1200;
  spec.seed = 42;
  spec.benign_frac = 0.5;
  Dataset all = synth_dataset(spec);
  Dataset train = subset(all, range_vec(0, 800));
  Dataset test = subset(all, range_vec(800, all.rows()));
  Mlp m = make_classifier(8, 2, 7);
  train_centralized(m, train, 150, 32, 5e-3, 7);
  CHECK(accuracy(m, test.X, test.Y) > 0.9);
}

TEST_CASE("classify and loss never mutate their inputs") {
  Mlp m = make_classifier(4, 2, 5);
  Rng rng = make_rng(17);
  Tensor x = uniform_tensor(rng, 6, 4);
  Tensor y = one_hot({0, 1, 0, 1, 0, 1}, 2);
  Tensor x_copy = x;
  Tensor y_copy = y;
  classify(m, x);
  ce_loss_value(m, x, y);
  model_gradient(m, x, y);
  CHECK(x == x_copy);
  CHECK(y == y_copy);
}

TEST_CASE("cross-entropy values") {
  SUBCASE("uniform logits, one-hot target, n=4 -> ln 4") {
    Graph g;
    Tensor y(1, 4);
    y.at(0, 1) = 1.0;
    double loss = ce_loss(g.leaf(Tensor(1, 4)), g.constant(y)).val()[0];
    CHECK(loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  }
  SUBCASE("peaked logits at the target class -> loss < 0.01") {
    Graph g;
    Tensor z(1, 4);
    z.at(0, 2) = 10.0;  // gap >= 10 to every other logit
    Tensor y(1, 4);
    y.at(0, 2) = 1.0;
    CHECK(ce_loss(g.leaf(z), g.constant(y)).val()[0] < 0.01);
  }
  SUBCASE("all-zero soft target -> exactly 0") {
    Graph g;
    Rng rng = make_rng(3);
    double loss = ce_loss(g.leaf(uniform_tensor(rng, 2, 4, -3, 3)), g.constant(Tensor(2, 4))).val()[0];
    CHECK(loss == 0.0);
  }
}

TEST_CASE("anomaly scores") {
  SUBCASE("perfect reconstruction scores 0") {
    AnomalyAutoencoder ae;
    ae.net = Mlp::make({3, 3}, 5);  // single linear layer forced to identity
    ae.net.params.layers[0].W = Tensor(3, 3);
    for (int i = 0; i < 3; ++i) ae.net.params.layers[0].W.at(i, i) = 1.0;
    ae.net.params.layers[0].b = Tensor(1, 3);
    Rng rng = make_rng(4);
    Tensor x = uniform_tensor(rng, 5, 3);
    Tensor s = anomaly_scores(ae, x);
    for (int r = 0; r < 5; ++r) CHECK(s.at(r, 0) <= 1e-12);
  }
  SUBCASE("quantile 1.0 threshold equals the max benign score") {
    AnomalyAutoencoder ae = AnomalyAutoencoder::make(4, 9);
    Rng rng = make_rng(5);
    Tensor benign = uniform_tensor(rng, 50, 4);
    double thr = calibrate_threshold(ae, benign, 1.0);
    Tensor s = anomaly_scores(ae, benign);
    double mx = 0;
    for (int r = 0; r < s.rows(); ++r) mx = std::max(mx, s.at(r, 0));
    CHECK(thr == doctest::Approx(mx).epsilon(1e-12));
  }
  SUBCASE("scores are permutation-equivariant over rows") {
    AnomalyAutoencoder ae = AnomalyAutoencoder::make(4, 10);
    Rng rng = make_rng(6);
    Tensor x = uniform_tensor(rng, 6, 4);
    Tensor xrev(6, 4);
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 4; ++c) xrev.at(r, c) = x.at(5 - r, c);
    Tensor s = anomaly_scores(ae, x);
    Tensor srev = anomaly_scores(ae, xrev);
    for (int r = 0; r < 6; ++r) CHECK(s.at(r, 0) == srev.at(5 - r, 0));
  }
  SUBCASE("injected out-of-distribution rows score above the 0.99 threshold") {
    SynthSpec spec;
    spec.dim = 10;
    spec.n_classes = 2;
    spec.rows = 900;
    spec.seed = 21;
    spec.benign_frac = 0.7;
    spec.sigma = 0.04;
    Dataset ds = synth_dataset(spec);
    std::vector<int> benign_rows;
    auto labels = ds.labels();
    for (int r = 0; r < ds.rows(); ++r)
      if (labels[static_cast<size_t>(r)] == 0) benign_rows.push_back(r);
    Dataset benign = subset(ds, benign_rows);

    AnomalyAutoencoder ae = AnomalyAutoencoder::make(10, 33);
    Rng rng = make_rng(7);
    AeTrainConfig cfg;
    cfg.epochs = 80;
    train_autoencoder(ae, benign.X, cfg, rng);
    calibrate_threshold(ae, benign.X, 0.99);

    Tensor ood(60, 10);  // cube corners, far off the benign cluster
    Rng orng = make_rng(8);
    std::uniform_int_distribution<int> bit(0, 1);
    for (int r = 0; r < ood.rows(); ++r)
      for (int c = 0; c < 10; ++c) ood.at(r, c) = bit(orng);
    Tensor s = anomaly_scores(ae, ood);
    int above = 0;
    for (int r = 0; r < s.rows(); ++r)
      if (s.at(r, 0) > ae.threshold) ++above;
    CHECK(above >= static_cast<int>(0.9 * ood.rows()));
  }
  SUBCASE("empty benign set errors") {
    AnomalyAutoencoder ae = AnomalyAutoencoder::make(4, 1);
    Rng rng = make_rng(9);
    CHECK_THROWS_AS(train_autoencoder(ae, Tensor(0, 4), {}, rng), Error);
    CHECK_THROWS_AS(calibrate_threshold(ae, Tensor(0, 4), 0.99), Error);
  }
}

TEST_CASE("gan") {
  SUBCASE("generated samples always lie in [0,1]") {
    GanPair gan = GanPair::make(7, 77);
    Rng rng = make_rng(10);
    Tensor s = gan_generate(gan, 40, rng);
    for (size_t i = 0; i < s.size(); ++i) {
      CHECK(s[i] >= 0.0);
      CHECK(s[i] <= 1.0);
    }
  }
  SUBCASE("zero epochs leave the generator untouched") {
    GanPair gan = GanPair::make(5, 78);
    GanPair before = gan;
    Rng rng = make_rng(11);
    Tensor benign = uniform_tensor(rng, 16, 5);
    GanTrainConfig cfg;
    cfg.epochs = 0;
    gan_train(gan, benign, cfg, rng);
    CHECK(gan.generator.params.layers[0].W == before.generator.params.layers[0].W);
    CHECK(gan.generator.params.layers.back().b == before.generator.params.layers.back().b);
  }
  SUBCASE("fewer than 2 benign samples errors") {
    GanPair gan = GanPair::make(5, 79);
    Rng rng = make_rng(12);
    CHECK_THROWS_AS(gan_train(gan, Tensor(1, 5), {}, rng), Error);
  }
  SUBCASE("point-mass benign set: smoothed mean distance converges to the point") {
    const int dim = 6;
    Tensor c(1, dim);
    for (int i = 0; i < dim; ++i) c.at(0, i) = 0.25 + 0.08 * i;
    Tensor benign(64, dim);
    for (int r = 0; r < benign.rows(); ++r)
      for (int i = 0; i < dim; ++i) benign.at(r, i) = c.at(0, i);

    GanPair gan = GanPair::make(dim, 80);
    Rng rng = make_rng(13);
    GanTrainConfig cfg;
    cfg.epochs = 150;
    cfg.eval_samples = 64;
    std::vector<double> mean_dist;
    gan_train(gan, benign, cfg, rng, [&](int, const Tensor& samples) {
      double d = 0;
      for (int r = 0; r < samples.rows(); ++r) {
        double s = 0;
        for (int i = 0; i < dim; ++i)
          s += (samples.at(r, i) - c.at(0, i)) * (samples.at(r, i) - c.at(0, i));
        d += std::sqrt(s);
      }
      mean_dist.push_back(d / samples.rows());
    });
    // the generator drifts while the discriminator warms up, then converges;
    // the smoothed curve must fall monotonically after its peak (window 25
    // absorbs adversarial wobble at this scale)
    const size_t w = 25;
    std::vector<double> smooth;
    for (size_t i = 0; i + w <= mean_dist.size(); ++i) {
      double s = 0;
      for (size_t j = i; j < i + w; ++j) s += mean_dist[j];
      smooth.push_back(s / w);
    }
    size_t peak = 0;
    for (size_t i = 0; i < smooth.size(); ++i)
      if (smooth[i] > smooth[peak]) peak = i;
    CHECK(peak < smooth.size() / 2);
    int increases = 0;
    for (size_t i = peak; i + 1 < smooth.size(); ++i)
      if (smooth[i + 1] > smooth[i] + 0.03 * smooth[peak]) ++increases;
    CHECK(increases == 0);
    CHECK(smooth.back() < 0.5 * smooth[peak]);
  }
}

TEST_CASE("checkpoint round-trip is bit exact") {
  Mlp m = make_classifier(5, 3, 123);
  std::string path = (std::filesystem::temp_directory_path() / "fednids_ckpt_test.bin").string();
  save_mlp(path, m, 0.375, true);
  double thr = 0;
  Mlp back = load_mlp(path, &thr);
  CHECK(back.dims == m.dims);
  CHECK(thr == 0.375);
  REQUIRE(back.params.layers.size() == m.params.layers.size());
  for (size_t l = 0; l < m.params.layers.size(); ++l) {
    CHECK(back.params.layers[l].W == m.params.layers[l].W);
    CHECK(back.params.layers[l].b == m.params.layers[l].b);
  }
  std::filesystem::remove(path);
}
