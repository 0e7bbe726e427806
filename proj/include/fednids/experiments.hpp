#pragma once

#include <map>
#include <string>
#include <vector>

#include "fednids/adversarial.hpp"
#include "fednids/fl.hpp"
#include "fednids/metrics.hpp"
#include "fednids/reconstruct.hpp"

namespace fednids {

struct DataSpec {
  enum class Source { Synth, Csv };
  Source source = Source::Synth;
  SynthSpec synth;
  std::string csv_path;
  std::string schema_path;  // inferred from the CSV when empty
  std::string label_column = "label";
  int cap = 20000;          // stratified train-row cap; 0 disables
  bool local_norm = false;  // per-client normalization statistics
  PartitionMode partition = PartitionMode::Iid;
  int p_attack_types = 0;   // non-iid; 0 = ceil(types/2)
};

struct PrivacySpec {
  int probes = 100;
  std::string stage = "early";  // early | late
  std::string checkpoint;       // trained model for the late stage
  InversionMetric metric = InversionMetric::L2;
  int steps = 300;
  double lr = 0.1;
  int restarts = 3;
};

struct EvadeSpec {
  bool whitebox = true;
  bool blackbox = true;
  int samples = 100;
  std::vector<double> eps_list = {10.0 / 255.0, 40.0 / 255.0, 80.0 / 255.0};
  double pgd_alpha = 6.0 / 255.0;
  std::vector<double> c_list = {1e-2, 1e-3, 1e-4};
  int attack_steps = 100;
  int recon_steps = 300;
  int gan_epochs = 100;
};

struct ExperimentConfig {
  std::string kind;  // train | privacy | evade
  std::string name = "experiment";
  std::string out_dir = "runs/out";
  std::vector<uint64_t> seeds = {1};
  DataSpec data;
  FlConfig fl;
  Defense defense;
  std::vector<double> alpha_list;          // train: feddef sweep
  std::vector<std::string> defense_list;   // privacy/evade: compared defenses
  PrivacySpec privacy;
  EvadeSpec evade;
  bool bound_enabled = false;
  ConvergenceBoundInputs bound;
  bool full = false;
};

// flat sectioned key-value text; [full] entries override when --full is given.
// Validation gathers every problem before reporting.
ExperimentConfig load_config(const std::string& path, bool full);
void validate_config(const ExperimentConfig& cfg);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct ExperimentReport {
  std::string name;
  std::string kind;
  std::string config_echo;
  std::vector<std::string> violations;  // failed in-run invariant checks
  std::map<std::string, Table> tables;
  std::map<std::string, double> scalars;
  std::vector<std::string> notes;
  std::map<std::string, std::vector<std::string>> jsonl;  // pre-rendered JSON lines files
  std::map<std::string, double> timings;  // wall clock only; excluded from canonical exports

  std::string to_json() const;
  static ExperimentReport from_json(const std::string& text);
};

// summary.json plus one CSV per table, stable column order; exporting the same
// report twice is byte identical. Wall-clock timings go to timings.txt only.
void export_report(const ExperimentReport& report, const std::string& out_dir);

std::string format_double(double v);

struct PreparedData {
  Dataset train;
  Dataset test;
  std::vector<Dataset> shards;
  int benign_class = 0;
};
PreparedData prepare_data(const DataSpec& spec, int n_clients, uint64_t seed);

ExperimentReport run_train(const ExperimentConfig& cfg);
ExperimentReport run_privacy(const ExperimentConfig& cfg);
ExperimentReport run_evasion(const ExperimentConfig& cfg);

}  // namespace fednids
