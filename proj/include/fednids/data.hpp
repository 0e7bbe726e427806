#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fednids/rng.hpp"
#include "fednids/tensor.hpp"

namespace fednids {

enum class FeatureKind { Continuous, Discrete };

struct FeatureColumn {
  std::string name;
  FeatureKind kind = FeatureKind::Continuous;
  double min = 0.0;
  double max = 1.0;
};

struct FeatureSchema {
  std::vector<FeatureColumn> cols;

  int dim() const { return static_cast<int>(cols.size()); }
  int count(FeatureKind k) const {
    int n = 0;
    for (const auto& c : cols)
      if (c.kind == k) ++n;
    return n;
  }
  void validate() const;
};

void save_schema(const std::string& path, const FeatureSchema& schema);
FeatureSchema load_schema(const std::string& path);

// X normalized to [0,1], Y one-hot; class 0 is the benign class by convention.
struct Dataset {
  Tensor X;
  Tensor Y;
  FeatureSchema schema;
  std::vector<std::string> class_names;

  int rows() const { return X.rows(); }
  int dim() const { return X.cols(); }
  int classes() const { return Y.cols(); }
  std::vector<int> labels() const;
};

struct SplitDataset {
  Dataset train;
  Dataset test;
  std::vector<std::string> warnings;
};

struct IngestOptions {
  uint64_t seed = 0;
  double train_frac = 0.7;  // 7:3 split
  std::vector<std::string> expected_classes;  // when non-empty, unknown labels error
};

// CSV with a header row; feature cells must be numeric, the label column may
// be any string. Normalizes with the schema min/max; a constant column
// (max == min) maps to 0 with a warning.
SplitDataset ingest_csv(const std::string& path, const FeatureSchema& schema,
                        const std::string& label_column, const IngestOptions& opts = {});

// min/max from the data; a column is discrete when every value is integral
// (or when `discrete_hint` marks it).
FeatureSchema infer_schema(const std::string& csv_path, const std::string& label_column,
                           const std::vector<int>& discrete_hint = {});

enum class PartitionMode { Iid, NonIid };

struct PartitionPlan {
  PartitionMode mode = PartitionMode::Iid;
  std::vector<std::vector<int>> client_rows;
  std::string to_json() const;
};

// iid: equal random shards (sizes within 1). non-iid: every client gets 1/N of
// the benign rows; each client additionally receives the 1/N chunk of each of
// its p randomly chosen attack types.
PartitionPlan partition(const Dataset& ds, int n_clients, PartitionMode mode, uint64_t seed,
                        int p_attack_types = 0, int benign_class = 0);

Dataset subset(const Dataset& ds, const std::vector<int>& rows);

// re-normalize a shard with its own min/max statistics ("local users normalize
// their own datasets"); the shard's schema is replaced accordingly.
Dataset localize(const Dataset& shard);

std::vector<double> project_to_original(const Tensor& x, int row, const FeatureSchema& schema);

// clamp to [0,1]; discrete features are denormalized, rounded to the nearest
// integer in range and renormalized. Idempotent.
void canonicalize_row(Tensor& x, int row, const FeatureSchema& schema);
Tensor canonicalize(const Tensor& x, const FeatureSchema& schema);

struct SynthSpec {
  int dim = 8;
  int n_classes = 2;
  int rows = 1000;
  uint64_t seed = 1;
  double sigma = 0.06;
  double sep = 3.0;               // min center distance = sep * sigma * sqrt(dim)
  double benign_frac = 0.3;       // share of class 0 rows
  std::vector<int> discrete_cols;
  int discrete_levels = 4;
};

// Gaussian class clusters clipped to [0,1], a configurable subset of columns
// quantized to integer levels. Deterministic per seed, separable by
// construction.
Dataset synth_dataset(const SynthSpec& spec);

// proportional per-class subsample down to at most `cap` rows
Dataset stratified_cap(const Dataset& ds, int cap, uint64_t seed);

// write rows in original feature space with a trailing label column; the
// produced file round-trips through ingest_csv with the same schema.
void export_original_csv(const std::string& path, const Dataset& ds, const std::string& label_column = "label");

Tensor one_hot(const std::vector<int>& labels, int n_classes);

// index of the "benign"/"normal" class name, 0 when absent
int benign_class_of(const Dataset& ds);

}  // namespace fednids
