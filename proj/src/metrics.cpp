#include "fednids/metrics.hpp"

#include <cmath>

namespace fednids {

double privacy_score(const Tensor& x, int x_row, const Tensor& xstar, int xstar_row,
                     const FeatureSchema& schema) {
  if (x.cols() != schema.dim() || xstar.cols() != schema.dim())
    fail("privacy_score: row length does not match schema");
  auto orig = project_to_original(x, x_row, schema);
  auto orig_star = project_to_original(xstar, xstar_row, schema);
  double total = 0.0;
  for (int c = 0; c < schema.dim(); ++c) {
    const auto& col = schema.cols[static_cast<size_t>(c)];
    if (col.kind == FeatureKind::Continuous) {
      total += std::fabs(x.at(x_row, c) - xstar.at(xstar_row, c));
    } else {
      double a = std::round(orig[static_cast<size_t>(c)]);
      double b = std::round(orig_star[static_cast<size_t>(c)]);
      total += (a == b) ? 0.0 : 1.0;
    }
  }
  return total / schema.dim();
}

double label_accuracy(const std::vector<int>& reconstructed, const std::vector<int>& truth) {
  if (reconstructed.size() != truth.size() || truth.empty())
    fail("label_accuracy: size mismatch or empty input");
  size_t hit = 0;
  for (size_t i = 0; i < truth.size(); ++i)
    if (reconstructed[i] == truth[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double convergence_bound(const ConvergenceBoundInputs& in) {
  if (in.mu <= 0.0) fail("convergence_bound: mu must be > 0");
  if (in.L < in.mu) fail("convergence_bound: requires L >= mu");
  if (in.E < 1 || in.K < 1 || in.T < 1) fail("convergence_bound: E, K, T must be >= 1");
  if (in.sigma_k.size() != in.p_k.size() || in.p_k.empty())
    fail("convergence_bound: sigma_k and p_k must be non-empty and aligned");

  double kappa = in.L / in.mu;
  double B = 0.0;
  for (size_t k = 0; k < in.p_k.size(); ++k) {
    double term = in.epsilon + in.sigma_k[k];
    B += in.p_k[k] * in.p_k[k] * term * term;
  }
  double eg = in.epsilon + in.G;
  B += 6.0 * in.L * in.Gamma;
  B += 8.0 * static_cast<double>(in.E - 1) * static_cast<double>(in.E - 1) * eg * eg;
  double C = (4.0 / in.K) * static_cast<double>(in.E) * static_cast<double>(in.E) * eg * eg;
  return (2.0 * kappa / (in.mu + in.T)) * ((B + C) / in.mu + 2.0 * in.L * in.theta_dist * in.theta_dist);
}

Theorem3Result theorem3_check(const Theorem3Inputs& in, const Tensor& x, const Tensor& x_prime) {
  if (!in.grad_W.same_shape(in.grad_W_prime) || !in.grad_b.same_shape(in.grad_b_prime))
    fail("theorem3_check: gradient shapes differ between the two pairs");
  double nb = in.grad_b.l2();
  double nbp = in.grad_b_prime.l2();
  if (in.M < nb || in.M < nbp)
    fail("theorem3_check: M violates the bias-gradient bound (observed " +
         std::to_string(std::max(nb, nbp)) + " > M)");

  Tensor dw(in.grad_W.rows(), in.grad_W.cols());
  for (size_t i = 0; i < dw.size(); ++i) dw[i] = in.grad_W_prime[i] - in.grad_W[i];
  Tensor db(in.grad_b.rows(), in.grad_b.cols());
  for (size_t i = 0; i < db.size(); ++i) db[i] = in.grad_b_prime[i] - in.grad_b[i];

  Theorem3Result res;
  res.lower_bound = 2.0 * (dw.l2() - db.l2()) / (2.0 * in.M + db.l2());

  if (!x.same_shape(x_prime)) fail("theorem3_check: x and x' shapes differ");
  double d = 0.0;
  for (size_t i = 0; i < x.size(); ++i) d += (x_prime[i] - x[i]) * (x_prime[i] - x[i]);
  res.measured = std::sqrt(d);
  res.holds = res.measured >= res.lower_bound - 1e-9;
  return res;
}

}  // namespace fednids
