#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fednids/experiments.hpp"
#include "json.hpp"

namespace fednids {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

namespace {

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_kv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail("config: cannot open " + path);
  KeyValues kv;
  std::string line, section;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    line = line.substr(start);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      auto end = line.find(']');
      if (end == std::string::npos) fail("config: unterminated section at line " + std::to_string(lineno));
      section = line.substr(1, end - 1);
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) fail("config: expected key=value at line " + std::to_string(lineno));
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      size_t a = s.find_first_not_of(" \t");
      size_t b = s.find_last_not_of(" \t");
      s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
    };
    trim(key);
    trim(val);
    kv[section.empty() ? key : section + "." + key] = val;
  }
  return kv;
}

struct Reader {
  const KeyValues& kv;
  std::vector<std::string> errors;

  bool has(const std::string& k) const { return kv.count(k) > 0; }
  std::string str(const std::string& k, const std::string& def) {
    auto it = kv.find(k);
    return it == kv.end() ? def : it->second;
  }
  double num(const std::string& k, double def) {
    auto it = kv.find(k);
    if (it == kv.end()) return def;
    try {
      size_t used = 0;
      double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (...) {
      errors.push_back(k + ": not a number ('" + it->second + "')");
      return def;
    }
  }
  int integer(const std::string& k, int def) {
    double v = num(k, def);
    if (v != std::floor(v)) errors.push_back(k + ": expected an integer");
    return static_cast<int>(v);
  }
  bool flag(const std::string& k, bool def) {
    auto it = kv.find(k);
    if (it == kv.end()) return def;
    if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
    if (it->second == "false" || it->second == "0" || it->second == "no") return false;
    errors.push_back(k + ": expected a boolean");
    return def;
  }
  std::vector<double> num_list(const std::string& k, std::vector<double> def) {
    auto it = kv.find(k);
    if (it == kv.end()) return def;
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        out.push_back(std::stod(cell));
      } catch (...) {
        errors.push_back(k + ": bad list entry '" + cell + "'");
      }
    }
    return out;
  }
  std::vector<std::string> str_list(const std::string& k, std::vector<std::string> def) {
    auto it = kv.find(k);
    if (it == kv.end()) return def;
    std::vector<std::string> out;
    std::stringstream ss(it->second);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  }
};

Defense defense_from_reader(Reader& r, const std::string& prefix) {
  Defense d = defense_from_name(r.str(prefix + "kind", "none"));
  d.feddef.alpha = r.num(prefix + "alpha", d.feddef.alpha);
  d.feddef.delta = r.num(prefix + "delta", d.feddef.delta);
  d.feddef.epsilon = r.num(prefix + "epsilon", d.feddef.epsilon);
  d.feddef.lr = r.num(prefix + "def_lr", d.feddef.lr);
  d.feddef.steps = r.integer(prefix + "def_ep", d.feddef.steps);
  d.feddef.g_value = r.num(prefix + "g_value", d.feddef.g_value);
  d.dp.variance = r.num(prefix + "dp_variance", d.dp.variance);
  d.dp.scale_is_b = r.flag(prefix + "dp_scale_is_b", d.dp.scale_is_b);
  d.gp.rate = r.num(prefix + "gp_rate", d.gp.rate);
  d.mix.k = r.integer(prefix + "mix_k", d.mix.k);
  d.mix.flip_prob = r.num(prefix + "mix_flip", d.mix.flip_prob);
  return d;
}

}  // namespace

ExperimentConfig load_config(const std::string& path, bool full) {
  KeyValues kv = parse_kv_file(path);
  if (full) {
    // [full] entries override their targets, written as full.section.key
    KeyValues merged = kv;
    for (const auto& [k, v] : kv)
      if (k.rfind("full.", 0) == 0) merged[k.substr(5)] = v;
    kv = std::move(merged);
  }
  Reader r{kv, {}};
  ExperimentConfig cfg;
  cfg.full = full;
  cfg.kind = r.str("experiment.kind", "");
  cfg.name = r.str("experiment.name", "experiment");
  cfg.out_dir = r.str("experiment.out", "runs/" + cfg.name);
  {
    std::vector<double> seeds = r.num_list("experiment.seeds", {1});
    cfg.seeds.clear();
    for (double s : seeds) cfg.seeds.push_back(static_cast<uint64_t>(s));
  }

  std::string source = r.str("data.source", "synth");
  if (source == "synth") {
    cfg.data.source = DataSpec::Source::Synth;
  } else if (source == "csv") {
    cfg.data.source = DataSpec::Source::Csv;
  } else {
    r.errors.push_back("data.source: expected synth or csv");
  }
  cfg.data.synth.dim = r.integer("data.dim", cfg.data.synth.dim);
  cfg.data.synth.n_classes = r.integer("data.classes", cfg.data.synth.n_classes);
  cfg.data.synth.rows = r.integer("data.rows", cfg.data.synth.rows);
  cfg.data.synth.sigma = r.num("data.sigma", cfg.data.synth.sigma);
  cfg.data.synth.benign_frac = r.num("data.benign_frac", cfg.data.synth.benign_frac);
  cfg.data.synth.discrete_levels = r.integer("data.discrete_levels", cfg.data.synth.discrete_levels);
  {
    std::vector<double> dc = r.num_list("data.discrete_cols", {});
    cfg.data.synth.discrete_cols.clear();
    for (double c : dc) cfg.data.synth.discrete_cols.push_back(static_cast<int>(c));
  }
  cfg.data.csv_path = r.str("data.path", "");
  cfg.data.schema_path = r.str("data.schema", "");
  cfg.data.label_column = r.str("data.label_column", "label");
  cfg.data.cap = r.integer("data.cap", cfg.data.cap);
  cfg.data.local_norm = r.str("data.normalization", "global") == "local";
  cfg.data.partition = r.str("data.partition", "iid") == "non-iid" ? PartitionMode::NonIid : PartitionMode::Iid;
  cfg.data.p_attack_types = r.integer("data.p_attack_types", 0);

  cfg.fl.clients = r.integer("fl.clients", cfg.fl.clients);
  cfg.fl.sample_k = r.integer("fl.sample_k", cfg.fl.clients);
  cfg.fl.local_steps = r.integer("fl.local_steps", cfg.fl.local_steps);
  cfg.fl.rounds = r.integer("fl.rounds", cfg.fl.rounds);
  cfg.fl.batch = r.integer("fl.batch", cfg.fl.batch);
  cfg.fl.lr = r.num("fl.lr", cfg.fl.lr);
  cfg.fl.decay = r.num("fl.decay", cfg.fl.decay);
  cfg.fl.decay_every = r.integer("fl.decay_every", cfg.fl.decay_every);
  cfg.fl.optimizer = r.str("fl.optimizer", "adam") == "sgd" ? LocalOptimizer::Sgd : LocalOptimizer::Adam;
  cfg.fl.weights = r.num_list("fl.weights", {});

  cfg.defense = defense_from_reader(r, "defense.");
  cfg.alpha_list = r.num_list("defense.alpha_list", {});
  cfg.defense_list = r.str_list("compare.defenses", {});

  cfg.privacy.probes = r.integer("privacy.probes", cfg.privacy.probes);
  cfg.privacy.stage = r.str("privacy.stage", cfg.privacy.stage);
  cfg.privacy.checkpoint = r.str("privacy.checkpoint", "");
  cfg.privacy.metric = r.str("privacy.metric", "l2") == "cosine" ? InversionMetric::Cosine : InversionMetric::L2;
  cfg.privacy.steps = r.integer("privacy.steps", cfg.privacy.steps);
  cfg.privacy.lr = r.num("privacy.lr", cfg.privacy.lr);
  cfg.privacy.restarts = r.integer("privacy.restarts", cfg.privacy.restarts);

  cfg.evade.whitebox = r.flag("evade.whitebox", cfg.evade.whitebox);
  cfg.evade.blackbox = r.flag("evade.blackbox", cfg.evade.blackbox);
  cfg.evade.samples = r.integer("evade.samples", cfg.evade.samples);
  {
    std::vector<double> eps = r.num_list("evade.eps_list_255", {10, 40, 80});
    cfg.evade.eps_list.clear();
    for (double e : eps) cfg.evade.eps_list.push_back(e / 255.0);
  }
  cfg.evade.pgd_alpha = r.num("evade.pgd_alpha_255", 6.0) / 255.0;
  cfg.evade.c_list = r.num_list("evade.c_list", cfg.evade.c_list);
  cfg.evade.attack_steps = r.integer("evade.steps", cfg.evade.attack_steps);
  cfg.evade.recon_steps = r.integer("evade.recon_steps", cfg.evade.recon_steps);
  cfg.evade.gan_epochs = r.integer("evade.gan_epochs", cfg.evade.gan_epochs);

  cfg.bound_enabled = r.has("bound.L");
  if (cfg.bound_enabled) {
    cfg.bound.L = r.num("bound.L", 1.0);
    cfg.bound.mu = r.num("bound.mu", 1.0);
    cfg.bound.G = r.num("bound.G", 1.0);
    cfg.bound.Gamma = r.num("bound.Gamma", 0.0);
    double sigma = r.num("bound.sigma", 1.0);
    cfg.bound.sigma_k.assign(static_cast<size_t>(cfg.fl.clients), sigma);
    cfg.bound.theta_dist = r.num("bound.theta_dist", 1.0);
  }

  if (!r.errors.empty()) {
    std::string msg = "config " + path + " has " + std::to_string(r.errors.size()) + " problem(s):";
    for (const auto& e : r.errors) msg += "\n  - " + e;
    fail(msg);
  }
  return cfg;
}

void validate_config(const ExperimentConfig& cfg) {
  std::vector<std::string> errors;
  if (cfg.kind != "train" && cfg.kind != "privacy" && cfg.kind != "evade")
    errors.push_back("experiment.kind must be train, privacy or evade");
  if (cfg.seeds.empty()) errors.push_back("experiment.seeds must be non-empty");
  if (cfg.data.source == DataSpec::Source::Csv) {
    if (cfg.data.csv_path.empty())
      errors.push_back("data.path is required for csv datasets");
    else if (!std::filesystem::exists(cfg.data.csv_path))
      errors.push_back("data.path does not exist: " + cfg.data.csv_path);
    if (!cfg.data.schema_path.empty() && !std::filesystem::exists(cfg.data.schema_path))
      errors.push_back("data.schema does not exist: " + cfg.data.schema_path);
  } else {
    if (cfg.data.synth.dim < 1) errors.push_back("data.dim must be >= 1");
    if (cfg.data.synth.n_classes < 2) errors.push_back("data.classes must be >= 2");
    if (cfg.data.synth.rows < cfg.data.synth.n_classes) errors.push_back("data.rows too small");
  }
  if (cfg.fl.clients < 1) errors.push_back("fl.clients must be >= 1");
  if (cfg.fl.sample_k < 1 || cfg.fl.sample_k > cfg.fl.clients)
    errors.push_back("fl.sample_k must be in [1, clients]");
  if (cfg.fl.rounds < 1) errors.push_back("fl.rounds must be >= 1");
  if (cfg.fl.batch < 1) errors.push_back("fl.batch must be >= 1");
  if (cfg.defense.kind == DefenseKind::FedDef && cfg.defense.feddef.steps < 1)
    errors.push_back("defense.def_ep must be >= 1");
  if (cfg.defense.kind == DefenseKind::Gp &&
      (cfg.defense.gp.rate < 0.0 || cfg.defense.gp.rate >= 1.0))
    errors.push_back("defense.gp_rate must be in [0,1)");
  if (cfg.defense.kind == DefenseKind::Dp && cfg.defense.dp.variance <= 0.0)
    errors.push_back("defense.dp_variance must be > 0");
  for (const auto& d : cfg.defense_list) {
    try {
      defense_from_name(d);
    } catch (const Error&) {
      errors.push_back("compare.defenses: unknown defense '" + d + "'");
    }
  }
  if (cfg.kind == "privacy") {
    if (cfg.privacy.probes < 1) errors.push_back("privacy.probes must be >= 1");
    if (cfg.privacy.stage != "early" && cfg.privacy.stage != "late")
      errors.push_back("privacy.stage must be early or late");
    if (cfg.privacy.stage == "late" && cfg.privacy.checkpoint.empty())
      errors.push_back("privacy.checkpoint is required for the late stage");
    if (cfg.privacy.stage == "late" && !cfg.privacy.checkpoint.empty() &&
        !std::filesystem::exists(cfg.privacy.checkpoint))
      errors.push_back("privacy.checkpoint does not exist: " + cfg.privacy.checkpoint);
  }
  if (cfg.kind == "evade") {
    if (cfg.evade.samples < 1) errors.push_back("evade.samples must be >= 1");
    if (cfg.evade.eps_list.empty()) errors.push_back("evade.eps_list_255 must be non-empty");
  }
  if (!errors.empty()) {
    std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problem(s)):";
    for (const auto& e : errors) msg += "\n  - " + e;
    fail(msg);
  }
}

std::string ExperimentReport::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["kind"] = kind;
  j["config_echo"] = config_echo;
  j["violations"] = violations;
  j["notes"] = notes;
  nlohmann::json scal(nlohmann::json::value_t::object);
  for (const auto& [k, v] : scalars) scal[k] = format_double(v);
  j["scalars"] = scal;
  nlohmann::json tabs(nlohmann::json::value_t::object);
  for (const auto& [tname, t] : tables) {
    nlohmann::json tj;
    tj["header"] = t.header;
    tj["rows"] = t.rows;
    tabs[tname] = tj;
  }
  j["tables"] = tabs;
  nlohmann::json jl(nlohmann::json::value_t::object);
  for (const auto& [fname, lines] : jsonl) jl[fname] = lines;
  j["jsonl"] = jl;
  return j.dump(2) + "\n";
}

ExperimentReport ExperimentReport::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ExperimentReport r;
  r.name = j.at("name").get<std::string>();
  r.kind = j.at("kind").get<std::string>();
  r.config_echo = j.at("config_echo").get<std::string>();
  r.violations = j.at("violations").get<std::vector<std::string>>();
  r.notes = j.at("notes").get<std::vector<std::string>>();
  for (const auto& [k, v] : j.at("scalars").items()) r.scalars[k] = std::stod(v.get<std::string>());
  for (const auto& [k, v] : j.at("tables").items()) {
    Table t;
    t.header = v.at("header").get<std::vector<std::string>>();
    t.rows = v.at("rows").get<std::vector<std::vector<std::string>>>();
    r.tables[k] = std::move(t);
  }
  if (j.contains("jsonl"))
    for (const auto& [k, v] : j.at("jsonl").items()) r.jsonl[k] = v.get<std::vector<std::string>>();
  return r;
}

void export_report(const ExperimentReport& report, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream f(out_dir + "/summary.json", std::ios::binary);
    if (!f) fail("export_report: cannot write to " + out_dir);
    f << report.to_json();
  }
  for (const auto& [tname, t] : report.tables) {
    std::ofstream f(out_dir + "/" + tname + ".csv", std::ios::binary);
    if (!f) fail("export_report: cannot write table " + tname);
    for (size_t i = 0; i < t.header.size(); ++i) f << (i ? "," : "") << t.header[i];
    f << "\n";
    for (const auto& row : t.rows) {
      for (size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
      f << "\n";
    }
  }
  for (const auto& [fname, lines] : report.jsonl) {
    std::ofstream f(out_dir + "/" + fname + ".jsonl", std::ios::binary);
    if (!f) fail("export_report: cannot write " + fname);
    for (const auto& line : lines) f << line << "\n";
  }
  if (!report.timings.empty()) {
    std::ofstream f(out_dir + "/timings.txt");
    for (const auto& [k, v] : report.timings) f << k << "=" << format_double(v) << "ms\n";
  }
}

}  // namespace fednids
