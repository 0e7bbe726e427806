#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fednids/adversarial.hpp"
#include "fednids/data.hpp"
#include "test_util.hpp"

using namespace fednids;

namespace {

struct Fixture {
  Dataset train;
  Dataset attacks;  // malicious rows only
  Mlp model;
  AnomalyAutoencoder ae;
  int benign = 0;

  Fixture() : model(make_classifier(8, 3, 41)), ae(AnomalyAutoencoder::make(8, 42)) {
    SynthSpec spec;
    spec.dim = 8;
    spec.n_classes = 3;
    spec.rows = 900;
    spec.seed = 4242;
    spec.benign_frac = 0.5;
    spec.sigma = 0.05;
    train = synth_dataset(spec);

    // quick centralized training so attacks have a competent victim
    AdamState st = AdamState::like(model.params.param_count());
    Rng rng = make_rng(1, 2);
    std::uniform_int_distribution<int> pick(0, train.rows() - 1);
    for (int step = 0; step < 250; ++step) {
      Tensor x(32, 8), y(32, 3);
      for (int r = 0; r < 32; ++r) {
        int src = pick(rng);
        for (int c = 0; c < 8; ++c) x.at(r, c) = train.X.at(src, c);
        for (int c = 0; c < 3; ++c) y.at(r, c) = train.Y.at(src, c);
      }
      adam_step(model.params, model_gradient(model, x, y), st, 5e-3);
    }

    std::vector<int> benign_rows, attack_rows;
    auto labels = train.labels();
    for (int r = 0; r < train.rows(); ++r)
      (labels[static_cast<size_t>(r)] == 0 ? benign_rows : attack_rows).push_back(r);
    Tensor benign_x = subset(train, benign_rows).X;
    Rng ae_rng = make_rng(3);
    AeTrainConfig ae_cfg;
    ae_cfg.epochs = 60;
    train_autoencoder(ae, benign_x, ae_cfg, ae_rng);
    calibrate_threshold(ae, benign_x, 0.99);

    attack_rows.resize(60);
    attacks = subset(train, attack_rows);
  }
};

const Fixture& fixture() {
  static Fixture f;
  return f;
}

double linf(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("fgsm basics") {
  const Fixture& f = fixture();
  AttackConfig cfg;
  cfg.kind = AttackKind::Fgsm;
  cfg.target = f.benign;

  SUBCASE("eps=0 is the identity") {
    cfg.eps = 0.0;
    CHECK(fgsm(f.model, f.attacks.X, cfg) == f.attacks.X);
    CHECK(fgsm(f.ae, f.attacks.X, cfg) == f.attacks.X);
  }
  SUBCASE("L-inf budget always holds and inputs are not mutated") {
    Tensor before = f.attacks.X;
    for (double eps : {10.0 / 255, 40.0 / 255, 80.0 / 255}) {
      cfg.eps = eps;
      Tensor adv = fgsm(f.model, f.attacks.X, cfg);
      CHECK(linf(adv, f.attacks.X) <= eps + 1e-12);
      for (size_t i = 0; i < adv.size(); ++i) {
        CHECK(adv[i] >= 0.0);
        CHECK(adv[i] <= 1.0);
      }
    }
    CHECK(f.attacks.X == before);
  }
  SUBCASE("zero-parameter autoencoder gives the analytic sign step") {
    // reconstruction is 0, so the score gradient is sign(x) coordinate-wise
    AnomalyAutoencoder zero_ae = AnomalyAutoencoder::make(8, 1);
    for (auto& l : zero_ae.net.params.layers) {
      l.W = Tensor(l.W.rows(), l.W.cols());
      l.b = Tensor(1, l.b.cols());
    }
    Rng rng = make_rng(4);
    Tensor x = uniform_tensor(rng, 5, 8, 0.2, 0.9);
    cfg.eps = 20.0 / 255;
    Tensor adv = fgsm(zero_ae, x, cfg);
    for (size_t i = 0; i < x.size(); ++i)
      CHECK(adv[i] == doctest::Approx(std::max(0.0, x[i] - cfg.eps)).epsilon(1e-12));
  }
}

TEST_CASE("pgd reduces to fgsm at one full-size step without random start") {
  const Fixture& f = fixture();
  AttackConfig cfg;
  cfg.target = f.benign;
  cfg.eps = 40.0 / 255;
  cfg.alpha = cfg.eps;
  cfg.steps = 1;
  cfg.random_start = false;
  CHECK(pgd(f.model, f.attacks.X, cfg) == fgsm(f.model, f.attacks.X, cfg));
  CHECK(pgd(f.ae, f.attacks.X, cfg) == fgsm(f.ae, f.attacks.X, cfg));
}

TEST_CASE("pgd stays in the ball and evades more with larger budgets") {
  const Fixture& f = fixture();
  AttackConfig cfg;
  cfg.target = f.benign;
  cfg.steps = 60;
  cfg.alpha = 6.0 / 255;
  double prev_er = -1;
  for (double eps : {10.0 / 255, 40.0 / 255, 80.0 / 255}) {
    cfg.eps = eps;
    Tensor adv = pgd(f.model, f.attacks.X, cfg);
    CHECK(linf(adv, f.attacks.X) <= eps + 1e-12);
    EvasionReport rep = evaluate_classifier_evasion(f.model, f.benign, f.attacks.X, adv);
    CHECK(rep.er + rep.acc == 1.0);
    CHECK(rep.er >= prev_er);
    prev_er = rep.er;
  }
  CHECK(prev_er > 0.5);  // the largest budget must actually evade a trained desk model
}

TEST_CASE("cw incumbent rule") {
  const Fixture& f = fixture();
  AttackConfig cfg;
  cfg.kind = AttackKind::Cw;
  cfg.target = f.benign;
  cfg.steps = 80;

  SUBCASE("already-benign samples come back unchanged") {
    std::vector<int> benign_rows;
    auto labels = f.train.labels();
    auto preds = predict(f.model, f.train.X);
    for (int r = 0; r < f.train.rows() && benign_rows.size() < 10; ++r)
      if (preds[static_cast<size_t>(r)] == f.benign) benign_rows.push_back(r);
    REQUIRE(!benign_rows.empty());
    Tensor xb = subset(f.train, benign_rows).X;
    Tensor adv = cw(f.model, xb, cfg);
    CHECK(adv == xb);
  }
  SUBCASE("committed rows satisfy the evasion predicate, others stay put") {
    Tensor adv = cw(f.model, f.attacks.X, cfg);
    auto pred = predict(f.model, adv);
    for (int r = 0; r < adv.rows(); ++r) {
      bool moved = false;
      for (int c = 0; c < adv.cols(); ++c)
        if (adv.at(r, c) != f.attacks.X.at(r, c)) moved = true;
      if (moved) CHECK(pred[static_cast<size_t>(r)] == f.benign);
    }
  }
  SUBCASE("anomaly variant commits only below-threshold rows") {
    Tensor adv = cw(f.ae, f.attacks.X, cfg);
    Tensor s = anomaly_scores(f.ae, adv);
    for (int r = 0; r < adv.rows(); ++r) {
      bool moved = false;
      for (int c = 0; c < adv.cols(); ++c)
        if (adv.at(r, c) != f.attacks.X.at(r, c)) moved = true;
      if (moved) CHECK(s.at(r, 0) < f.ae.threshold);
    }
  }
  SUBCASE("relaxing the distance weight cannot reduce evasion") {
    AttackConfig tight = cfg;
    tight.c = 1e-2;
    AttackConfig loose = cfg;
    loose.c = 1e-4;
    double er_tight =
        evaluate_classifier_evasion(f.model, f.benign, f.attacks.X, cw(f.model, f.attacks.X, tight)).er;
    double er_loose =
        evaluate_classifier_evasion(f.model, f.benign, f.attacks.X, cw(f.model, f.attacks.X, loose)).er;
    CHECK(er_loose >= er_tight);
  }
}

TEST_CASE("deepfool") {
  const Fixture& f = fixture();
  AttackConfig cfg;
  cfg.kind = AttackKind::DeepFool;
  cfg.eps = 40.0 / 255;

  SUBCASE("already-misclassified rows are untouched") {
    auto labels = f.attacks.labels();
    auto preds = predict(f.model, f.attacks.X);
    std::vector<int> mis;
    for (int r = 0; r < f.attacks.rows(); ++r)
      if (preds[static_cast<size_t>(r)] != labels[static_cast<size_t>(r)]) mis.push_back(r);
    if (!mis.empty()) {
      Dataset d = subset(f.attacks, mis);
      Tensor adv = deepfool(f.model, d.X, d.labels(), cfg);
      CHECK(adv == d.X);
    }
  }
  SUBCASE("two-class linear classifier: step is the analytic hyperplane projection") {
    Mlp lin = Mlp::make({2, 2}, 77);
    Tensor x(1, 2);
    x.at(0, 0) = 0.6;
    x.at(0, 1) = 0.4;
    Tensor z = lin.forward_values(x);
    int pred = z.argmax_row(0);
    // w = grad(z_other - z_pred), f = z_other - z_pred
    const Tensor& W = lin.params.layers[0].W;
    Tensor w(1, 2);
    for (int c = 0; c < 2; ++c) w.at(0, c) = W.at(1 - pred, c) - W.at(pred, c);
    double fval = z.at(0, 1 - pred) - z.at(0, pred);
    double wn = w.l2();
    AttackConfig lin_cfg = cfg;
    lin_cfg.eps = 10.0;  // no clipping, observe the raw step
    Tensor adv = deepfool(lin, x, {pred}, lin_cfg);
    Tensor delta(1, 2);
    for (int c = 0; c < 2; ++c) delta.at(0, c) = adv.at(0, c) - x.at(0, c);
    // parallel to w and of magnitude |f|/||w|| (within the overshoot factor)
    double cosine = (delta.at(0, 0) * w.at(0, 0) + delta.at(0, 1) * w.at(0, 1)) / (delta.l2() * wn);
    CHECK(std::fabs(cosine) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(delta.l2() == doctest::Approx(1.02 * std::fabs(fval) / wn).epsilon(0.1));
  }
  SUBCASE("budget cap holds after clipping") {
    Tensor adv = deepfool(f.model, f.attacks.X, f.attacks.labels(), cfg);
    CHECK(linf(adv, f.attacks.X) <= cfg.eps + 1e-12);
  }
  SUBCASE("unsupported against the anomaly detector") {
    CHECK_THROWS_AS(deepfool(f.ae, f.attacks.X, cfg), Error);
    CHECK_THROWS_AS(autopgd(f.ae, f.attacks.X, cfg), Error);
  }
}

TEST_CASE("autopgd") {
  const Fixture& f = fixture();
  AttackConfig cfg;
  cfg.kind = AttackKind::AutoPgd;
  cfg.target = f.benign;
  cfg.eps = 40.0 / 255;
  cfg.steps = 60;
  auto labels = f.attacks.labels();

  SUBCASE("budget holds and evasion beats fgsm on a desk run") {
    Tensor adv = autopgd(f.model, f.attacks.X, labels, cfg);
    CHECK(linf(adv, f.attacks.X) <= cfg.eps + 1e-12);
    AttackConfig fcfg = cfg;
    fcfg.kind = AttackKind::Fgsm;
    Tensor fadv = fgsm(f.model, f.attacks.X, fcfg);
    double er_auto = evaluate_classifier_evasion(f.model, f.benign, f.attacks.X, adv).er;
    double er_fgsm = evaluate_classifier_evasion(f.model, f.benign, f.attacks.X, fadv).er;
    CHECK(er_auto >= er_fgsm);
  }
  SUBCASE("per-sample objective at the returned point is usually at least as good as fgsm") {
    Tensor adv = autopgd(f.model, f.attacks.X, labels, cfg);
    AttackConfig fcfg = cfg;
    fcfg.kind = AttackKind::Fgsm;
    Tensor fadv = fgsm(f.model, f.attacks.X, fcfg);
    // targeted DLR per row, computed straight from logit values
    auto dlr = [&](const Tensor& cand, int r) {
      Tensor z = f.model.forward_values(cand);
      std::vector<double> zr(static_cast<size_t>(z.cols()));
      for (int c = 0; c < z.cols(); ++c) zr[static_cast<size_t>(c)] = z.at(r, c);
      std::vector<double> sorted = zr;
      std::sort(sorted.rbegin(), sorted.rend());
      double den = sorted[0] - sorted[2];  // 3 classes
      double num = zr[static_cast<size_t>(labels[static_cast<size_t>(r)])] -
                   zr[static_cast<size_t>(f.benign)];
      return den == 0 ? 0.0 : num / den;
    };
    int better = 0;
    for (int r = 0; r < f.attacks.rows(); ++r)
      if (dlr(adv, r) <= dlr(fadv, r) + 1e-9) ++better;
    CHECK(better >= static_cast<int>(0.8 * f.attacks.rows()));
  }
}

TEST_CASE("er accounting is exact for the anomaly detector") {
  const Fixture& f = fixture();
  Tensor s = anomaly_scores(f.ae, f.attacks.X);
  EvasionReport rep = evaluate_anomaly_evasion(f.ae, f.attacks.X, f.attacks.X);
  int below = 0;
  for (int r = 0; r < s.rows(); ++r)
    if (s.at(r, 0) < f.ae.threshold) ++below;
  CHECK(rep.er == static_cast<double>(below) / s.rows());
  CHECK(rep.er + rep.acc == 1.0);
}

TEST_CASE("blackbox gan pipeline") {
  const Fixture& f = fixture();

  SUBCASE("clean benign data converges toward the benign score range") {
    auto labels = f.train.labels();
    std::vector<int> benign_rows;
    for (int r = 0; r < f.train.rows() && benign_rows.size() < 100; ++r)
      if (labels[static_cast<size_t>(r)] == 0) benign_rows.push_back(r);
    Dataset benign = subset(f.train, benign_rows);
    Tensor bs = anomaly_scores(f.ae, benign.X);
    double benign_mean = bs.sum() / bs.rows();

    GanAttackCurves curves = blackbox_gan(f.model, f.ae, f.benign, benign.X, benign.labels(), 100, 100, 9);
    CHECK(curves.mean_score.back() < 2.0 * benign_mean);
  }
  SUBCASE("uniform-noise reconstructions cannot evade the detector") {
    Rng rng = make_rng(10);
    Tensor noise = uniform_tensor(rng, 80, 8);
    std::vector<int> labels(80, 0);  // everything labeled benign
    GanAttackCurves curves = blackbox_gan(f.model, f.ae, f.benign, noise, labels, 60, 100, 11);
    CHECK(curves.er_anomaly == 0.0);
    for (double s : curves.mean_score) CHECK(s >= f.ae.threshold);
  }
  SUBCASE("empty benign pool throws the dedicated failure") {
    Rng rng = make_rng(12);
    Tensor noise = uniform_tensor(rng, 20, 8);
    std::vector<int> labels(20, 1);  // nothing labeled benign
    CHECK_THROWS_AS(blackbox_gan(f.model, f.ae, f.benign, noise, labels, 10, 10, 13),
                    EmptyBenignPool);
  }
}
