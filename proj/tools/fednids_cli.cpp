#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "fednids/experiments.hpp"

namespace {

struct CommonOpts {
  std::string config;
  std::vector<uint64_t> seeds;
  std::string out;
  bool full = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config, "experiment config file")->required();
  cmd->add_option("--seed", opts.seeds, "seed (repeatable, overrides the config)");
  cmd->add_option("--out", opts.out, "output directory (overrides the config)");
  cmd->add_flag("--full", opts.full, "use the [full] parameter overrides");
}

fednids::ExperimentConfig load(const CommonOpts& opts, const std::string& kind) {
  fednids::ExperimentConfig cfg = fednids::load_config(opts.config, opts.full);
  if (!opts.seeds.empty()) cfg.seeds = opts.seeds;
  if (!opts.out.empty()) cfg.out_dir = opts.out;
  if (cfg.kind.empty()) cfg.kind = kind;
  if (cfg.kind != kind)
    fednids::fail("config kind '" + cfg.kind + "' does not match subcommand '" + kind + "'");
  fednids::validate_config(cfg);
  return cfg;
}

int finish(const fednids::ExperimentReport& rep, const std::string& out_dir) {
  fednids::export_report(rep, out_dir);
  std::cout << rep.kind << " '" << rep.name << "' -> " << out_dir << "\n";
  for (const auto& [k, v] : rep.scalars) std::cout << "  " << k << " = " << fednids::format_double(v) << "\n";
  for (const auto& n : rep.notes) std::cout << "  note: " << n << "\n";
  if (!rep.violations.empty()) {
    std::cerr << rep.violations.size() << " invariant violation(s):\n";
    for (const auto& v : rep.violations) std::cerr << "  - " << v << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated NIDS privacy lab"};
  app.require_subcommand(1);

  CommonOpts train_opts, privacy_opts, evade_opts;
  auto* cmd_train = app.add_subcommand("train", "federated training with a defense");
  add_common(cmd_train, train_opts);
  auto* cmd_privacy = app.add_subcommand("privacy", "reconstruction attacks and privacy scores");
  add_common(cmd_privacy, privacy_opts);
  auto* cmd_evade = app.add_subcommand("evade", "white-box and GAN evasion suites");
  add_common(cmd_evade, evade_opts);

  std::string report_in, report_format = "csv";
  auto* cmd_report = app.add_subcommand("report", "re-export a finished run");
  cmd_report->add_option("--in", report_in, "run directory containing summary.json")->required();
  cmd_report->add_option("--format", report_format, "csv | json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_train->parsed()) {
      auto cfg = load(train_opts, "train");
      return finish(fednids::run_train(cfg), cfg.out_dir);
    }
    if (cmd_privacy->parsed()) {
      auto cfg = load(privacy_opts, "privacy");
      return finish(fednids::run_privacy(cfg), cfg.out_dir);
    }
    if (cmd_evade->parsed()) {
      auto cfg = load(evade_opts, "evade");
      return finish(fednids::run_evasion(cfg), cfg.out_dir);
    }
    if (cmd_report->parsed()) {
      std::ifstream f(report_in + "/summary.json");
      if (!f) fednids::fail("report: cannot open " + report_in + "/summary.json");
      std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
      fednids::ExperimentReport rep = fednids::ExperimentReport::from_json(text);
      if (report_format == "json") {
        std::cout << rep.to_json();
      } else {
        fednids::export_report(rep, report_in);
        std::cout << "re-exported " << rep.tables.size() << " table(s) to " << report_in << "\n";
      }
      return rep.violations.empty() ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
