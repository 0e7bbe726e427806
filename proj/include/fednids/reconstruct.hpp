#pragma once

#include "fednids/data.hpp"
#include "fednids/defenses.hpp"
#include "fednids/models.hpp"

namespace fednids {

// Gradient snapshot an honest-but-curious server observes, plus the batch size
// it is assumed to know.
struct LeakedUpdate {
  GradientVector grad;
  int batch_hint = 1;
};

// gradient the defender actually shares: input hooks applied before the
// gradient, gradient hooks after
LeakedUpdate leak_update(const Mlp& model, const Tensor& x, const Tensor& y, const Defense& defense,
                         Rng& rng);

enum class ExtractionFailure { None, BatchNotOne, SingularGram, VanishedGradient };

struct ExtractionResult {
  bool ok = false;
  Tensor x;  // 1 x dim, raw (not canonicalized)
  ExtractionFailure reason = ExtractionFailure::None;
};

// closed form x^T = (dL/dW)^T (dL/db)^T (dL/db (dL/db)^T)^{-1} from the first
// layer; fails (signalled, not thrown) when the Gram scalar is singular within
// 1e-30 or the batch hint is not 1
ExtractionResult extract_single(const Mlp& model, const LeakedUpdate& update);

enum class InversionMetric { L2, Cosine };

struct InversionConfig {
  InversionMetric metric = InversionMetric::L2;
  int steps = 300;
  double lr = 0.1;
  int restarts = 3;
  uint64_t seed = 0;
  const FeatureSchema* schema = nullptr;  // canonicalize when set
  const Tensor* x0 = nullptr;             // optional warm start
  const Tensor* y0 = nullptr;
};

struct InversionResult {
  Tensor x;  // rows x dim, canonicalized when a schema was given
  Tensor y;  // rows x classes, raw optimizer output
  std::vector<int> labels;
  double objective = 0.0;
  int restarts_used = 0;
};

// dummy (x*, y*) ~ uniform(0,1), Adam on the chosen gradient-distance metric,
// best iterate kept; objective across accepted iterates never increases
InversionResult invert(const Mlp& model, const LeakedUpdate& update, const InversionConfig& cfg);

// coordinate descent over samples: one row optimized while the rest stay
// frozen; rows are unordered relative to the ground truth
InversionResult invert_batch(const Mlp& model, const LeakedUpdate& update, int batch_size,
                             const InversionConfig& cfg);

enum class ReconstructionMethod { Extraction, Inversion };

struct ReconstructionResult {
  Tensor x;
  Tensor y;
  std::vector<int> labels;
  ReconstructionMethod method = ReconstructionMethod::Inversion;
  double objective = 0.0;
  ExtractionFailure extraction_failure = ExtractionFailure::None;
};

// extraction first when the batch hint is 1, inversion as fallback; labels
// always come from the inversion pass
ReconstructionResult reconstruct(const Mlp& model, const LeakedUpdate& update, const InversionConfig& cfg);

}  // namespace fednids
