#include "fednids/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fednids {

const char* attack_name(AttackKind k) {
  switch (k) {
    case AttackKind::Fgsm: return "fgsm";
    case AttackKind::Pgd: return "pgd";
    case AttackKind::Cw: return "cw";
    case AttackKind::DeepFool: return "deepfool";
    case AttackKind::AutoPgd: return "autopgd";
  }
  return "?";
}

namespace {

Tensor clip01(Tensor x) {
  for (size_t i = 0; i < x.size(); ++i) x[i] = std::min(1.0, std::max(0.0, x[i]));
  return x;
}

Tensor project_ball(const Tensor& x, const Tensor& x0, double eps) {
  Tensor out = x;
  for (size_t i = 0; i < out.size(); ++i) {
    double d = std::min(eps, std::max(-eps, out[i] - x0[i]));
    out[i] = std::min(1.0, std::max(0.0, x0[i] + d));
  }
  return out;
}

Tensor sign_of(const Tensor& g) {
  Tensor s(g.rows(), g.cols());
  for (size_t i = 0; i < g.size(); ++i) s[i] = g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0);
  return s;
}

Tensor onehot_rows(int rows, int cols, int hot) {
  Tensor t(rows, cols);
  for (int r = 0; r < rows; ++r) t.at(r, hot) = 1.0;
  return t;
}

// d/dx of sum-over-rows CE(f(x), target)
Tensor ce_input_grad(const Mlp& model, const Tensor& x, int target) {
  Graph g;
  BoundParams bp = bind_params(g, model.params);
  Value vx = g.leaf(x);
  Value logits = model.forward(g, vx, bp);
  Value loss = mul_const(sum_all(mul(g.constant(onehot_rows(x.rows(), model.out_dim(), target)),
                                     log_softmax_rows(logits))),
                         -1.0);
  return grad1(loss, vx).val();
}

// d/dx of sum of per-row anomaly scores
Tensor score_input_grad(const AnomalyAutoencoder& ae, const Tensor& x) {
  Graph g;
  Value vx = g.leaf(x);
  Value scores = anomaly_scores_value(ae, g, vx);
  return grad1(sum_all(scores), vx).val();
}

}  // namespace

Tensor fgsm(const Mlp& model, const Tensor& x, const AttackConfig& cfg) {
  Tensor g = ce_input_grad(model, x, cfg.target);
  Tensor s = sign_of(g);
  Tensor out = x;
  for (size_t i = 0; i < out.size(); ++i) out[i] -= cfg.eps * s[i];
  return clip01(std::move(out));
}

Tensor fgsm(const AnomalyAutoencoder& ae, const Tensor& x, const AttackConfig& cfg) {
  Tensor g = score_input_grad(ae, x);
  Tensor s = sign_of(g);
  Tensor out = x;
  for (size_t i = 0; i < out.size(); ++i) out[i] -= cfg.eps * s[i];
  return clip01(std::move(out));
}

namespace {

template <class GradFn>
Tensor pgd_core(const Tensor& x, const AttackConfig& cfg, GradFn grad_fn) {
  Tensor adv = x;
  if (cfg.random_start) {
    Rng rng = make_rng(cfg.seed, 0x96d);
    Tensor noise = uniform_tensor(rng, x.rows(), x.cols(), -cfg.eps, cfg.eps);
    for (size_t i = 0; i < adv.size(); ++i) adv[i] += noise[i];
    adv = project_ball(adv, x, cfg.eps);
  }
  for (int step = 0; step < cfg.steps; ++step) {
    Tensor s = sign_of(grad_fn(adv));
    for (size_t i = 0; i < adv.size(); ++i) adv[i] -= cfg.alpha * s[i];
    adv = project_ball(adv, x, cfg.eps);
  }
  return adv;
}

}  // namespace

Tensor pgd(const Mlp& model, const Tensor& x, const AttackConfig& cfg) {
  return pgd_core(x, cfg, [&](const Tensor& a) { return ce_input_grad(model, a, cfg.target); });
}

Tensor pgd(const AnomalyAutoencoder& ae, const Tensor& x, const AttackConfig& cfg) {
  return pgd_core(x, cfg, [&](const Tensor& a) { return score_input_grad(ae, a); });
}

namespace {

// margin toward the target class per row: max_{j != t} z_j - z_t (<= 0 means
// the row is classified as the target)
std::vector<double> target_margins(const Mlp& model, const Tensor& x, int target) {
  Tensor z = model.forward_values(x);
  std::vector<double> m(static_cast<size_t>(x.rows()));
  for (int r = 0; r < z.rows(); ++r) {
    double other = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < z.cols(); ++c)
      if (c != target) other = std::max(other, z.at(r, c));
    m[static_cast<size_t>(r)] = other - z.at(r, target);
  }
  return m;
}

double row_l2(const Tensor& a, const Tensor& b, int r) {
  double s = 0.0;
  for (int c = 0; c < a.cols(); ++c) s += (a.at(r, c) - b.at(r, c)) * (a.at(r, c) - b.at(r, c));
  return std::sqrt(s);
}

template <class SuccessFn, class LossFn>
Tensor cw_core(const Tensor& x, const AttackConfig& cfg, SuccessFn succeeded, LossFn attack_loss) {
  // incumbent rule: a row is replaced only by an adversarial candidate with a
  // strictly better distance; otherwise the original row is returned
  Tensor best = x;
  std::vector<double> best_dist(static_cast<size_t>(x.rows()), std::numeric_limits<double>::infinity());
  {
    std::vector<char> ok = succeeded(x);
    for (int r = 0; r < x.rows(); ++r)
      if (ok[static_cast<size_t>(r)]) best_dist[static_cast<size_t>(r)] = 0.0;
  }

  Tensor adv = x;
  AdamState st = AdamState::like(adv.size());
  for (int step = 0; step < cfg.steps; ++step) {
    Graph g;
    Value vx = g.leaf(adv);
    Value dist = sum_cols(mul(sub(vx, g.constant(x)), sub(vx, g.constant(x))));  // rows x 1
    Value obj = sum_all(add(mul_const(dist, cfg.c), attack_loss(g, vx)));
    Tensor gr = grad1(obj, vx).val();
    adam_step(adv, gr, st, cfg.cw_lr);
    adv = clip01(std::move(adv));

    std::vector<char> ok = succeeded(adv);
    for (int r = 0; r < adv.rows(); ++r) {
      if (!ok[static_cast<size_t>(r)]) continue;
      double d = row_l2(adv, x, r);
      if (d < best_dist[static_cast<size_t>(r)]) {
        best_dist[static_cast<size_t>(r)] = d;
        for (int c = 0; c < x.cols(); ++c) best.at(r, c) = adv.at(r, c);
      }
    }
  }
  return best;
}

}  // namespace

Tensor cw(const Mlp& model, const Tensor& x, const AttackConfig& cfg) {
  int n = model.out_dim();
  Tensor t_hot = onehot_rows(x.rows(), n, cfg.target);
  Tensor mask(x.rows(), n);  // -inf surrogate on the target column
  for (int r = 0; r < x.rows(); ++r) mask.at(r, cfg.target) = -1e30;

  auto succeeded = [&](const Tensor& cand) {
    std::vector<double> m = target_margins(model, cand, cfg.target);
    std::vector<char> ok(m.size());
    for (size_t i = 0; i < m.size(); ++i) ok[i] = m[i] < 0 ? 1 : 0;
    return ok;
  };
  auto attack_loss = [&](Graph& g, Value vx) {
    BoundParams bp = bind_params(g, model.params);
    Value z = model.forward(g, vx, bp);
    Value zt = sum_cols(mul(z, g.constant(t_hot)));
    Value max_other = mul_const(min_cols(mul_const(add(z, g.constant(mask)), -1.0)), -1.0);
    return relu(sub(max_other, zt));  // rows x 1
  };
  return cw_core(x, cfg, succeeded, attack_loss);
}

Tensor cw(const AnomalyAutoencoder& ae, const Tensor& x, const AttackConfig& cfg) {
  auto succeeded = [&](const Tensor& cand) {
    Tensor s = anomaly_scores(ae, cand);
    std::vector<char> ok(static_cast<size_t>(s.rows()));
    for (int r = 0; r < s.rows(); ++r) ok[static_cast<size_t>(r)] = s.at(r, 0) < ae.threshold ? 1 : 0;
    return ok;
  };
  auto attack_loss = [&](Graph& g, Value vx) {
    return relu(add_const(anomaly_scores_value(ae, g, vx), -ae.threshold));
  };
  return cw_core(x, cfg, succeeded, attack_loss);
}

Tensor deepfool(const Mlp& model, const Tensor& x, const std::vector<int>& labels,
                const AttackConfig& cfg) {
  if (static_cast<int>(labels.size()) != x.rows()) fail("deepfool: labels size != rows");
  int n = model.out_dim();
  Tensor out = x;
  const int max_iter = std::min(cfg.steps, 50);

  for (int r = 0; r < x.rows(); ++r) {
    Tensor xr(1, x.cols());
    for (int c = 0; c < x.cols(); ++c) xr.at(0, c) = x.at(r, c);
    int true_label = labels[static_cast<size_t>(r)];
    for (int iter = 0; iter < max_iter; ++iter) {
      Graph g;
      BoundParams bp = bind_params(g, model.params);
      Value vx = g.leaf(xr);
      Value z = model.forward(g, vx, bp);
      const Tensor zv = z.val();  // copy: later grad() calls grow the node pool
      int pred = zv.argmax_row(0);
      if (pred != true_label) break;  // already off the true class (iter 0: unperturbed)

      // linearized distance to every other class hyperplane
      Tensor gk = grad1(sum_cols(mul(z, g.constant(onehot_rows(1, n, true_label)))), vx).val();
      double best_ratio = std::numeric_limits<double>::infinity();
      Tensor best_w;
      double best_f = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j == true_label) continue;
        Tensor gj = grad1(sum_cols(mul(z, g.constant(onehot_rows(1, n, j)))), vx).val();
        Tensor w(1, x.cols());
        for (size_t i = 0; i < w.size(); ++i) w[i] = gj[i] - gk[i];
        double wn = w.l2();
        if (wn < 1e-12) continue;
        double f = zv.at(0, j) - zv.at(0, true_label);
        double ratio = std::fabs(f) / wn;
        if (ratio < best_ratio) {
          best_ratio = ratio;
          best_w = std::move(w);
          best_f = f;
        }
      }
      if (!best_w.size()) break;  // degenerate: all hyperplanes parallel
      double wn2 = 0.0;
      for (size_t i = 0; i < best_w.size(); ++i) wn2 += best_w[i] * best_w[i];
      double scale = cfg.overshoot * std::fabs(best_f) / wn2;
      for (size_t i = 0; i < best_w.size(); ++i) xr[i] += scale * best_w[i];
    }
    for (int c = 0; c < x.cols(); ++c) out.at(r, c) = xr.at(0, c);
  }
  return project_ball(out, x, cfg.eps);
}

namespace {

// targeted DLR: (z_y - z_t) / (z_pi1 - (z_pi3 + z_pi4)/2); three-class nets
// use z_pi1 - z_pi3, two-class nets fall back to CE outside this helper
Value dlr_objective(const Mlp& model, Graph& g, Value vx, const std::vector<int>& labels, int target) {
  BoundParams bp = bind_params(g, model.params);
  Value z = model.forward(g, vx, bp);
  const Tensor& zv = z.val();
  int rows = zv.rows();
  int n = zv.cols();
  Tensor y_hot(rows, n), t_hot(rows, n), p1(rows, n), p3(rows, n), p4(rows, n);
  for (int r = 0; r < rows; ++r) {
    y_hot.at(r, labels[static_cast<size_t>(r)]) = 1.0;
    t_hot.at(r, target) = 1.0;
    std::vector<int> idx(static_cast<size_t>(n));
    for (int c = 0; c < n; ++c) idx[static_cast<size_t>(c)] = c;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return zv.at(r, a) > zv.at(r, b); });
    p1.at(r, idx[0]) = 1.0;
    if (n >= 4) {
      p3.at(r, idx[2]) = 0.5;
      p4.at(r, idx[3]) = 0.5;
    } else {
      p3.at(r, idx[2]) = 1.0;  // n == 3
    }
  }
  Value num = sub(sum_cols(mul(z, g.constant(y_hot))), sum_cols(mul(z, g.constant(t_hot))));
  Value den = sub(sum_cols(mul(z, g.constant(p1))),
                  add(sum_cols(mul(z, g.constant(p3))), sum_cols(mul(z, g.constant(p4)))));
  return sum_all(safediv(num, den));
}

}  // namespace

Tensor autopgd(const Mlp& model, const Tensor& x, const std::vector<int>& labels,
               const AttackConfig& cfg) {
  if (static_cast<int>(labels.size()) != x.rows()) fail("autopgd: labels size != rows");
  const bool use_ce = model.out_dim() < 3;  // DLR denominators need >= 3 classes

  auto objective_value_grad = [&](const Tensor& cand, Tensor* grad_out) {
    Graph g;
    Value vx = g.leaf(cand);
    Value obj;
    if (use_ce) {
      BoundParams bp = bind_params(g, model.params);
      Value logits = model.forward(g, vx, bp);
      obj = mul_const(sum_all(mul(g.constant(onehot_rows(cand.rows(), model.out_dim(), cfg.target)),
                                  log_softmax_rows(logits))),
                      -1.0);
    } else {
      obj = dlr_objective(model, g, vx, labels, cfg.target);
    }
    if (grad_out != nullptr) *grad_out = grad1(obj, vx).val();
    return obj.val()[0];
  };

  const double fractions[] = {0.0, 0.22, 0.41, 0.57, 0.70, 0.79, 0.86, 0.93};
  std::vector<int> checkpoints;
  for (double f : fractions) checkpoints.push_back(static_cast<int>(f * cfg.steps));
  checkpoints.push_back(cfg.steps);

  double eta = 2.0 * cfg.eps;
  Tensor x_prev = x;
  Tensor x_cur = x;
  Tensor grad_t;
  double f_cur = objective_value_grad(x_cur, &grad_t);
  Tensor x_best = x_cur;
  double f_best = f_cur;

  int improved_since_checkpoint = 0;
  size_t next_cp = 1;
  double eta_at_cp = eta;
  double fbest_at_cp = f_best;
  const double a = 0.75;

  for (int k = 0; k < cfg.steps; ++k) {
    Tensor s = sign_of(grad_t);
    Tensor z = x_cur;
    for (size_t i = 0; i < z.size(); ++i) z[i] -= eta * s[i];
    z = project_ball(z, x, cfg.eps);
    Tensor x_next(x.rows(), x.cols());
    if (k == 0) {
      x_next = z;
    } else {
      for (size_t i = 0; i < x_next.size(); ++i)
        x_next[i] = x_cur[i] + a * (z[i] - x_cur[i]) + (1.0 - a) * (x_cur[i] - x_prev[i]);
      x_next = project_ball(x_next, x, cfg.eps);
    }
    x_prev = x_cur;
    x_cur = std::move(x_next);
    f_cur = objective_value_grad(x_cur, &grad_t);
    if (f_cur < f_best) {
      f_best = f_cur;
      x_best = x_cur;
      ++improved_since_checkpoint;
    }
    if (next_cp < checkpoints.size() && k + 1 == checkpoints[next_cp]) {
      int interval = checkpoints[next_cp] - checkpoints[next_cp - 1];
      bool cond1 = improved_since_checkpoint < static_cast<int>(std::ceil(0.75 * interval));
      bool cond2 = (eta == eta_at_cp) && (f_best == fbest_at_cp);
      if (cond1 || cond2) {
        eta /= 2.0;
        x_cur = x_best;
        x_prev = x_best;
        f_cur = objective_value_grad(x_cur, &grad_t);
      }
      eta_at_cp = eta;
      fbest_at_cp = f_best;
      improved_since_checkpoint = 0;
      ++next_cp;
    }
  }
  return x_best;
}

Tensor deepfool(const AnomalyAutoencoder&, const Tensor&, const AttackConfig&) {
  fail("deepfool: unsupported against the anomaly detector (no class hyperplanes)");
}
Tensor autopgd(const AnomalyAutoencoder&, const Tensor&, const AttackConfig&) {
  fail("autopgd: unsupported against the anomaly detector (no logits for the DLR loss)");
}

EvasionReport evaluate_classifier_evasion(const Mlp& model, int benign_class, const Tensor& x,
                                          const Tensor& x_adv) {
  EvasionReport rep;
  rep.x_adv = x_adv;
  Tensor probs = classify(model, x_adv);
  int evaded = 0;
  double score_sum = 0.0;
  for (int r = 0; r < x_adv.rows(); ++r) {
    bool benign = probs.argmax_row(r) == benign_class;
    rep.success.push_back(benign ? 1 : 0);
    rep.l2_dist.push_back(row_l2(x_adv, x, r));
    rep.score.push_back(probs.at(r, benign_class));
    score_sum += probs.at(r, benign_class);
    if (benign) ++evaded;
  }
  int n = std::max(1, x_adv.rows());
  rep.er = static_cast<double>(evaded) / n;
  rep.acc = 1.0 - rep.er;
  rep.mean_score = score_sum / n;
  return rep;
}

EvasionReport evaluate_anomaly_evasion(const AnomalyAutoencoder& ae, const Tensor& x,
                                       const Tensor& x_adv) {
  EvasionReport rep;
  rep.x_adv = x_adv;
  Tensor s = anomaly_scores(ae, x_adv);
  int evaded = 0;
  double score_sum = 0.0;
  for (int r = 0; r < x_adv.rows(); ++r) {
    bool below = s.at(r, 0) < ae.threshold;
    rep.success.push_back(below ? 1 : 0);
    rep.l2_dist.push_back(row_l2(x_adv, x, r));
    rep.score.push_back(s.at(r, 0));
    score_sum += s.at(r, 0);
    if (below) ++evaded;
  }
  int n = std::max(1, x_adv.rows());
  rep.er = static_cast<double>(evaded) / n;
  rep.acc = 1.0 - rep.er;
  rep.mean_score = score_sum / n;
  return rep;
}

GanAttackCurves blackbox_gan(const Mlp& classifier, const AnomalyAutoencoder& ae, int benign_class,
                             const Tensor& reconstructions, const std::vector<int>& labels,
                             int epochs, int n_eval, uint64_t seed) {
  if (static_cast<int>(labels.size()) != reconstructions.rows())
    fail("blackbox_gan: labels size != reconstruction rows");
  std::vector<int> benign_rows;
  for (int r = 0; r < reconstructions.rows(); ++r)
    if (labels[static_cast<size_t>(r)] == benign_class) benign_rows.push_back(r);
  if (benign_rows.size() < 2) throw EmptyBenignPool();

  Tensor benign(static_cast<int>(benign_rows.size()), reconstructions.cols());
  for (size_t i = 0; i < benign_rows.size(); ++i)
    for (int c = 0; c < reconstructions.cols(); ++c)
      benign.at(static_cast<int>(i), c) = reconstructions.at(benign_rows[i], c);

  GanPair gan = GanPair::make(reconstructions.cols(), seed);
  Rng rng = make_rng(seed, 0x9a9);
  GanAttackCurves curves;
  curves.benign_pool = static_cast<int>(benign_rows.size());
  GanTrainConfig cfg;
  cfg.epochs = epochs;
  cfg.eval_samples = n_eval;
  gan_train(gan, benign, cfg, rng, [&](int, const Tensor& samples) {
    Tensor s = anomaly_scores(ae, samples);
    curves.mean_score.push_back(s.sum() / s.rows());
    std::vector<int> pred = predict(classifier, samples);
    int detected = 0;
    for (int p : pred)
      if (p != benign_class) ++detected;
    curves.acc_dnn.push_back(static_cast<double>(detected) / samples.rows());
  });
  curves.er_anomaly = (!curves.mean_score.empty() && curves.mean_score.back() < ae.threshold) ? 1.0 : 0.0;
  curves.er_dnn = curves.acc_dnn.empty() ? 0.0 : 1.0 - curves.acc_dnn.back();
  return curves;
}

}  // namespace fednids
