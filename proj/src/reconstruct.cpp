#include "fednids/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fednids {

LeakedUpdate leak_update(const Mlp& model, const Tensor& x, const Tensor& y, const Defense& defense,
                         Rng& rng) {
  Tensor xd = x;
  Tensor yd = y;
  defense.transform_batch(model, xd, yd, rng);
  GradientVector g = model_gradient(model, xd, yd);
  defense.transform_gradient(g, rng);
  return LeakedUpdate{std::move(g), x.rows()};
}

ExtractionResult extract_single(const Mlp& model, const LeakedUpdate& update) {
  if (update.grad.count() < 2)
    fail("extract_single: update lacks a first layer with weight and bias");
  const auto& wslot = update.grad.slots[0];
  const auto& bslot = update.grad.slots[1];
  if (bslot.rows != 1 || bslot.cols != wslot.rows)
    fail("extract_single: unsupported architecture, first layer bias shape mismatch");

  ExtractionResult res;
  if (update.batch_hint != 1) {
    // the b gradient of a broadcast bias factors through a rank-1 all-ones
    // matrix for batch > 1, so the Gram term is not invertible
    res.reason = ExtractionFailure::BatchNotOne;
    return res;
  }
  Tensor gw = update.grad.tensor(0);  // out x in
  Tensor gb = update.grad.tensor(1);  // 1 x out
  double gram = 0.0;
  for (size_t i = 0; i < gb.size(); ++i) gram += gb[i] * gb[i];
  if (!(gram >= 1e-30)) {
    res.reason = update.grad.max_abs() <= 1e-14 ? ExtractionFailure::VanishedGradient
                                                : ExtractionFailure::SingularGram;
    return res;
  }
  res.x = Tensor(1, gw.cols());
  for (int i = 0; i < gw.cols(); ++i) {
    double s = 0.0;
    for (int j = 0; j < gw.rows(); ++j) s += gw.at(j, i) * gb.at(0, j);
    res.x.at(0, i) = s / gram;
  }
  (void)model;
  res.ok = true;
  return res;
}

namespace {

Value gradient_distance(Graph& g, const std::vector<Value>& pseudo, const GradientVector& g0,
                        InversionMetric metric) {
  if (metric == InversionMetric::L2) {
    Value dist_sq;
    for (size_t i = 0; i < pseudo.size(); ++i) {
      Value s = sq_sum(sub(pseudo[i], g.constant(g0.tensor(static_cast<int>(i)))));
      dist_sq = dist_sq.valid() ? add(dist_sq, s) : s;
    }
    return sqrt(dist_sq);
  }
  Value ip, nsq;
  double g0_norm = g0.l2();
  for (size_t i = 0; i < pseudo.size(); ++i) {
    Value c = g.constant(g0.tensor(static_cast<int>(i)));
    Value t = inner(pseudo[i], c);
    Value s = sq_sum(pseudo[i]);
    ip = ip.valid() ? add(ip, t) : t;
    nsq = nsq.valid() ? add(nsq, s) : s;
  }
  Value denom = mul_const(sqrt(nsq), g0_norm);
  return add_const(mul_const(safediv(ip, denom), -1.0), 1.0);
}

struct BatchObjective {
  Value objective;
  double value = 0.0;
};

// objective for a candidate batch where row `row` of (x, y) is the variable
// pair (vx, vy) and all other rows are constants
BatchObjective batch_objective(Graph& g, const Mlp& model, const GradientVector& g0,
                               const Tensor& x, const Tensor& y, int row, Value vx, Value vy,
                               InversionMetric metric) {
  Tensor masked_x = x;
  Tensor masked_y = y;
  for (int c = 0; c < x.cols(); ++c) masked_x.at(row, c) = 0.0;
  for (int c = 0; c < y.cols(); ++c) masked_y.at(row, c) = 0.0;
  Tensor sel(x.rows(), 1);
  sel.at(row, 0) = 1.0;
  Value selv = g.constant(sel);
  Value xf = add(g.constant(masked_x), matmul(selv, vx));
  Value yf = add(g.constant(masked_y), matmul(selv, vy));

  BoundParams bp = bind_params(g, model.params);
  Value loss = ce_loss(model.forward(g, xf, bp), yf);
  std::vector<Value> pseudo = grad(loss, bp.values);
  BatchObjective out;
  out.objective = gradient_distance(g, pseudo, g0, metric);
  out.value = out.objective.val()[0];
  return out;
}

}  // namespace

InversionResult invert_batch(const Mlp& model, const LeakedUpdate& update, int batch_size,
                             const InversionConfig& cfg) {
  if (batch_size < 1) fail("invert: batch size must be >= 1");
  if (cfg.steps < 1) fail("invert: steps must be >= 1");
  int dim = model.in_dim();
  int classes = model.out_dim();

  InversionResult best;
  best.objective = std::numeric_limits<double>::infinity();
  int restarts_used = 0;

  for (int attempt = 0; attempt < std::max(1, cfg.restarts); ++attempt) {
    Rng rng = make_rng(cfg.seed, 0x1d7, static_cast<uint64_t>(attempt));
    Tensor X = uniform_tensor(rng, batch_size, dim);
    Tensor Y = uniform_tensor(rng, batch_size, classes);
    if (cfg.x0 != nullptr && attempt == 0) X = *cfg.x0;
    if (cfg.y0 != nullptr && attempt == 0) Y = *cfg.y0;

    // per-row optimization budget spread over sweeps of the batch
    const int sweeps = batch_size == 1 ? 1 : 2;
    const int steps_per_visit = std::max(1, cfg.steps / sweeps);

    Tensor bestX = X;
    Tensor bestY = Y;
    double best_obj = std::numeric_limits<double>::infinity();
    bool diverged = false;

    // initial objective (row 0 as variable, value is row-independent)
    {
      Graph g;
      Tensor xr(1, dim), yr(1, classes);
      for (int c = 0; c < dim; ++c) xr.at(0, c) = X.at(0, c);
      for (int c = 0; c < classes; ++c) yr.at(0, c) = Y.at(0, c);
      auto obj = batch_objective(g, model, update.grad, X, Y, 0, g.leaf(xr), g.leaf(yr), cfg.metric);
      if (std::isfinite(obj.value)) {
        best_obj = obj.value;
        bestX = X;
        bestY = Y;
      }
    }

    for (int sweep = 0; sweep < sweeps && !diverged; ++sweep) {
      for (int row = 0; row < batch_size && !diverged; ++row) {
        Tensor xr(1, dim), yr(1, classes);
        for (int c = 0; c < dim; ++c) xr.at(0, c) = X.at(row, c);
        for (int c = 0; c < classes; ++c) yr.at(0, c) = Y.at(row, c);
        AdamState sx = AdamState::like(xr.size());
        AdamState sy = AdamState::like(yr.size());
        for (int step = 0; step < steps_per_visit; ++step) {
          Graph g;
          Value vx = g.leaf(xr);
          Value vy = g.leaf(yr);
          auto obj = batch_objective(g, model, update.grad, X, Y, row, vx, vy, cfg.metric);
          if (!std::isfinite(obj.value)) {
            diverged = true;
            break;
          }
          if (obj.value < best_obj) {
            best_obj = obj.value;
            for (int c = 0; c < dim; ++c) X.at(row, c) = xr.at(0, c);
            for (int c = 0; c < classes; ++c) Y.at(row, c) = yr.at(0, c);
            bestX = X;
            bestY = Y;
          }
          const Value wrt[] = {vx, vy};
          std::vector<Value> gs = grad(obj.objective, wrt);
          adam_step(xr, gs[0].val(), sx, cfg.lr);
          adam_step(yr, gs[1].val(), sy, cfg.lr);
        }
        // adopt the row's best-so-far position for subsequent rows
        for (int c = 0; c < dim; ++c) X.at(row, c) = bestX.at(row, c);
        for (int c = 0; c < classes; ++c) Y.at(row, c) = bestY.at(row, c);
      }
    }

    restarts_used = attempt + 1;
    if (best_obj < best.objective) {
      best.objective = best_obj;
      best.x = bestX;
      best.y = bestY;
    }
    if (!diverged && std::isfinite(best.objective)) break;  // restart only on divergence
  }

  if (!std::isfinite(best.objective))
    fail("invert: objective stayed non-finite across " + std::to_string(restarts_used) + " restarts");

  best.restarts_used = restarts_used;
  // the final iterate is always projected into legal feature space: clamp,
  // plus the discretize/renormalize round-trip when a schema is known
  if (cfg.schema != nullptr) {
    best.x = canonicalize(best.x, *cfg.schema);
  } else {
    for (size_t i = 0; i < best.x.size(); ++i) best.x[i] = std::min(1.0, std::max(0.0, best.x[i]));
  }
  best.labels.resize(static_cast<size_t>(best.y.rows()));
  for (int r = 0; r < best.y.rows(); ++r) best.labels[static_cast<size_t>(r)] = best.y.argmax_row(r);
  return best;
}

InversionResult invert(const Mlp& model, const LeakedUpdate& update, const InversionConfig& cfg) {
  return invert_batch(model, update, 1, cfg);
}

ReconstructionResult reconstruct(const Mlp& model, const LeakedUpdate& update,
                                 const InversionConfig& cfg) {
  ReconstructionResult res;
  ExtractionResult ex;
  if (update.batch_hint == 1) {
    ex = extract_single(model, update);
  } else {
    ex.reason = ExtractionFailure::BatchNotOne;
  }
  res.extraction_failure = ex.reason;

  InversionResult inv = invert_batch(model, update, std::max(1, update.batch_hint), cfg);
  res.y = inv.y;
  res.labels = inv.labels;
  res.objective = inv.objective;
  if (ex.ok) {
    res.method = ReconstructionMethod::Extraction;
    res.x = cfg.schema != nullptr ? canonicalize(ex.x, *cfg.schema) : ex.x;
  } else {
    res.method = ReconstructionMethod::Inversion;
    res.x = inv.x;
  }
  return res;
}

}  // namespace fednids
