#pragma once

#include <vector>

#include "fednids/models.hpp"

namespace fednids {

enum class AttackKind { Fgsm, Pgd, Cw, DeepFool, AutoPgd };

const char* attack_name(AttackKind k);

struct AttackConfig {
  AttackKind kind = AttackKind::Pgd;
  double eps = 40.0 / 255.0;    // L-inf budget (kept in the /255 convention)
  double alpha = 6.0 / 255.0;   // per-step size
  int steps = 100;
  double c = 1e-2;              // CW distance weight
  double cw_lr = 1e-2;
  int target = 0;               // benign class index (classifier attacks)
  uint64_t seed = 0;
  bool random_start = true;     // PGD
  double overshoot = 1.02;      // DeepFool step factor
};

// Targeted attacks against the classifier: drive samples toward cfg.target.
// Inputs stay in [0,1]^dim and within the declared budget; x is never mutated.
Tensor fgsm(const Mlp& model, const Tensor& x, const AttackConfig& cfg);
Tensor pgd(const Mlp& model, const Tensor& x, const AttackConfig& cfg);
// CW commits a perturbed row only when it reaches the target class at a lower
// L2 distance than the incumbent; rows that never do come back unchanged.
Tensor cw(const Mlp& model, const Tensor& x, const AttackConfig& cfg);
// untargeted closest-hyperplane steps; labels are each row's true class and
// already-misclassified rows are returned unperturbed
Tensor deepfool(const Mlp& model, const Tensor& x, const std::vector<int>& labels,
                const AttackConfig& cfg);
// budget-aware step halving at fixed checkpoint fractions with momentum and
// best-point restarts; targeted DLR objective (CE fallback for 2 classes)
Tensor autopgd(const Mlp& model, const Tensor& x, const std::vector<int>& labels,
               const AttackConfig& cfg);

// score-based variants against the anomaly detector (the gradient of the
// anomaly score replaces the CE loss); DeepFool/AutoPGD are unsupported there
Tensor fgsm(const AnomalyAutoencoder& ae, const Tensor& x, const AttackConfig& cfg);
Tensor pgd(const AnomalyAutoencoder& ae, const Tensor& x, const AttackConfig& cfg);
Tensor cw(const AnomalyAutoencoder& ae, const Tensor& x, const AttackConfig& cfg);
[[noreturn]] Tensor deepfool(const AnomalyAutoencoder& ae, const Tensor& x, const AttackConfig& cfg);
[[noreturn]] Tensor autopgd(const AnomalyAutoencoder& ae, const Tensor& x, const AttackConfig& cfg);

struct EvasionReport {
  Tensor x_adv;
  std::vector<char> success;        // per sample
  std::vector<double> l2_dist;      // per sample ||x_adv - x||_2
  std::vector<double> score;        // benign probability or anomaly score
  double acc = 0.0;                 // classifier accuracy / anomaly detection rate
  double er = 0.0;                  // evasion rate; er + acc == 1
  double mean_score = 0.0;
};

// success = classified as the benign class
EvasionReport evaluate_classifier_evasion(const Mlp& model, int benign_class, const Tensor& x,
                                          const Tensor& x_adv);
// success = anomaly score below the calibrated threshold
EvasionReport evaluate_anomaly_evasion(const AnomalyAutoencoder& ae, const Tensor& x,
                                       const Tensor& x_adv);

struct GanAttackCurves {
  std::vector<double> mean_score;  // per-epoch mean anomaly score of generated samples
  std::vector<double> acc_dnn;     // per-epoch fraction NOT classified benign
  double er_anomaly = 0.0;         // 1 when the final mean score is below threshold
  double er_dnn = 0.0;             // 1 - final acc_dnn
  int benign_pool = 0;
};

// trains a GAN on the reconstructions labeled benign and tracks both NIDS
// responses per epoch; throws when the benign pool is empty (that outcome is
// itself a defense success and is handled by the callers)
GanAttackCurves blackbox_gan(const Mlp& classifier, const AnomalyAutoencoder& ae, int benign_class,
                             const Tensor& reconstructions, const std::vector<int>& labels,
                             int epochs, int n_eval, uint64_t seed);

struct EmptyBenignPool : Error {
  EmptyBenignPool() : Error("blackbox_gan: no reconstructions were labeled benign") {}
};

}  // namespace fednids
