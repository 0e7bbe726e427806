#pragma once

#include <vector>

#include "fednids/data.hpp"
#include "fednids/params.hpp"

namespace fednids {

// Normalized dissimilarity between an original and a reconstructed row:
// absolute distance on continuous features, mismatch indicator (1 when the
// projected discrete values differ) on discrete features, divided by the
// feature count. Both rows must be canonicalized. Result lies in [0, 1];
// higher means less leakage.
double privacy_score(const Tensor& x, int x_row, const Tensor& xstar, int xstar_row,
                     const FeatureSchema& schema);
inline double privacy_score(const Tensor& x, const Tensor& xstar, const FeatureSchema& schema) {
  return privacy_score(x, 0, xstar, 0, schema);
}

// fraction of exact matches; lower is better for the defender
double label_accuracy(const std::vector<int>& reconstructed, const std::vector<int>& truth);

struct ConvergenceBoundInputs {
  double L = 1.0;                 // smoothness
  double mu = 1.0;                // strong convexity
  std::vector<double> sigma_k;    // per-client stochastic gradient deviation
  double G = 1.0;                 // gradient norm bound
  double epsilon = 0.0;           // defense gradient budget
  double Gamma = 0.0;             // degree of non-iid
  int E = 1;                      // local steps
  int K = 1;                      // clients sampled per round
  int T = 1;                      // total rounds
  std::vector<double> p_k;        // sampling weights
  double theta_dist = 0.0;        // ||theta_0 - theta*||
};

// (2k/(mu+T)) * ((B+C)/mu + 2L ||theta_0-theta*||^2) with
//   B = sum p_k^2 (eps+sigma_k)^2 + 6 L Gamma + 8 (E-1)^2 (eps+G)^2
//   C = (4/K) E^2 (eps+G)^2
// Diagnostic calculator: the constants are taken as given, not estimated.
double convergence_bound(const ConvergenceBoundInputs& in);

struct Theorem3Inputs {
  Tensor grad_W;        // d loss / d W on (x, y), first layer
  Tensor grad_b;        // d loss / d b on (x, y)
  Tensor grad_W_prime;  // same on (x', y')
  Tensor grad_b_prime;
  double M = 0.0;       // bound on ||dF/db||_2, must cover both observed norms
};

struct Theorem3Result {
  double lower_bound = 0.0;  // 2(||dW'-dW|| - ||db'-db||) / (2M + ||db'-db||)
  double measured = 0.0;     // ||x'-x||_2
  bool holds = false;        // measured >= lower_bound - 1e-9
};

Theorem3Result theorem3_check(const Theorem3Inputs& in, const Tensor& x, const Tensor& x_prime);

}  // namespace fednids
