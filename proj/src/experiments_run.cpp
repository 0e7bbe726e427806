#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "fednids/experiments.hpp"
#include "json.hpp"

namespace fednids {

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::pair<Dataset, Dataset> split_frac(const Dataset& ds, double frac, uint64_t seed) {
  std::vector<int> order(static_cast<size_t>(ds.rows()));
  for (int i = 0; i < ds.rows(); ++i) order[static_cast<size_t>(i)] = i;
  Rng rng = make_rng(seed, 0x5b117);
  std::shuffle(order.begin(), order.end(), rng);
  int n_train = static_cast<int>(std::lround(frac * ds.rows()));
  std::vector<int> a(order.begin(), order.begin() + n_train);
  std::vector<int> b(order.begin() + n_train, order.end());
  return {subset(ds, a), subset(ds, b)};
}

Defense defense_named(const ExperimentConfig& cfg, const std::string& name) {
  Defense d = defense_from_name(name);
  d.feddef = cfg.defense.feddef;
  d.dp = cfg.defense.dp;
  d.gp = cfg.defense.gp;
  d.mix = cfg.defense.mix;
  return d;
}

std::vector<std::string> compared_defenses(const ExperimentConfig& cfg) {
  if (!cfg.defense_list.empty()) return cfg.defense_list;
  return {cfg.defense.name()};
}

std::string config_echo_of(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["name"] = cfg.name;
  j["kind"] = cfg.kind;
  j["full"] = cfg.full;
  j["seeds"] = cfg.seeds;
  j["defense"] = cfg.defense.name();
  j["clients"] = cfg.fl.clients;
  j["rounds"] = cfg.fl.rounds;
  j["batch"] = cfg.fl.batch;
  j["lr"] = format_double(cfg.fl.lr);
  return j.dump();
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

PreparedData prepare_data(const DataSpec& spec, int n_clients, uint64_t seed) {
  PreparedData out;
  if (spec.source == DataSpec::Source::Synth) {
    SynthSpec s = spec.synth;
    s.seed = seed;
    Dataset all = synth_dataset(s);
    auto [train, test] = split_frac(all, 0.7, seed);
    out.train = std::move(train);
    out.test = std::move(test);
  } else {
    FeatureSchema schema = spec.schema_path.empty()
                               ? infer_schema(spec.csv_path, spec.label_column)
                               : load_schema(spec.schema_path);
    IngestOptions opts;
    opts.seed = seed;
    SplitDataset split = ingest_csv(spec.csv_path, schema, spec.label_column, opts);
    out.train = std::move(split.train);
    out.test = std::move(split.test);
  }
  if (spec.cap > 0) out.train = stratified_cap(out.train, spec.cap, seed);
  out.benign_class = benign_class_of(out.train);
  PartitionPlan plan =
      partition(out.train, n_clients, spec.partition, seed, spec.p_attack_types, out.benign_class);
  for (const auto& rows : plan.client_rows) {
    Dataset shard = subset(out.train, rows);
    if (spec.local_norm) shard = localize(shard);
    out.shards.push_back(std::move(shard));
  }
  return out;
}

ExperimentReport run_train(const ExperimentConfig& cfg) {
  validate_config(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  ExperimentReport rep;
  rep.name = cfg.name;
  rep.kind = "train";
  rep.config_echo = config_echo_of(cfg);

  struct Variant {
    std::string label;
    Defense defense;
  };
  std::vector<Variant> variants;
  if (cfg.defense.kind == DefenseKind::FedDef && !cfg.alpha_list.empty()) {
    for (double a : cfg.alpha_list) {
      Defense d = cfg.defense;
      d.feddef.alpha = a;
      variants.push_back({"feddef.alpha=" + format_double(a), d});
    }
  } else {
    variants.push_back({cfg.defense.name(), cfg.defense});
  }

  Table rounds_table{{"variant", "seed", "round", "acc", "loss", "lr"}, {}};
  Table summary_table{{"variant", "mean_acc", "sd_acc", "seeds"}, {}};
  double t0 = now_ms();

  for (const auto& variant : variants) {
    std::vector<double> finals;
    for (uint64_t seed : cfg.seeds) {
      PreparedData data = prepare_data(cfg.data, cfg.fl.clients, seed);
      FlConfig fl = cfg.fl;
      fl.seed = seed;
      FlResult res = train(fl, data.shards, data.test, variant.defense);
      for (const auto& r : res.rounds) {
        // learning-rate schedule invariant
        double expect = fl.lr * std::pow(fl.decay, static_cast<double>(r.round / fl.decay_every));
        if (r.lr != expect)
          rep.violations.push_back("lr schedule mismatch at round " + std::to_string(r.round));
        rounds_table.rows.push_back({variant.label, std::to_string(seed), std::to_string(r.round),
                                     format_double(r.test_acc), format_double(r.mean_loss),
                                     format_double(r.lr)});
      }
      double final_acc = res.rounds.back().test_acc;
      if (final_acc < 0.0 || final_acc > 1.0)
        rep.violations.push_back("accuracy out of [0,1] for seed " + std::to_string(seed));
      finals.push_back(final_acc);
      save_mlp(cfg.out_dir + "/model_" + variant.defense.name() + "_seed" + std::to_string(seed) + ".bin",
               res.model);
    }
    summary_table.rows.push_back({variant.label, format_double(mean_of(finals)),
                                  format_double(sd_of(finals)), std::to_string(cfg.seeds.size())});
    rep.scalars["mean_acc." + variant.label] = mean_of(finals);
  }
  rep.tables["rounds"] = std::move(rounds_table);
  rep.tables["train_summary"] = std::move(summary_table);

  if (cfg.bound_enabled) {
    ConvergenceBoundInputs b = cfg.bound;
    b.E = cfg.fl.local_steps;
    b.K = cfg.fl.sample_k;
    b.T = cfg.fl.rounds;
    b.p_k = cfg.fl.sampling_weights();
    if (b.sigma_k.size() != b.p_k.size()) b.sigma_k.assign(b.p_k.size(), 1.0);
    b.epsilon = cfg.defense.kind == DefenseKind::FedDef ? cfg.defense.feddef.epsilon : 0.0;
    rep.scalars["convergence_bound"] = convergence_bound(b);
  }
  rep.timings["total_ms"] = now_ms() - t0;
  return rep;
}

ExperimentReport run_privacy(const ExperimentConfig& cfg) {
  validate_config(cfg);
  ExperimentReport rep;
  rep.name = cfg.name;
  rep.kind = "privacy";
  rep.config_echo = config_echo_of(cfg);

  Table probes_table{
      {"defense", "seed", "probe", "method", "score", "label_ok", "objective"}, {}};
  Table summary_table{
      {"defense", "seed", "mean_score", "label_acc", "extraction_rate", "theorem3_holds"}, {}};
  double t0 = now_ms();

  for (uint64_t seed : cfg.seeds) {
    PreparedData data = prepare_data(cfg.data, cfg.fl.clients, seed);
    Mlp model = cfg.privacy.stage == "late"
                    ? load_mlp(cfg.privacy.checkpoint)
                    : make_classifier(data.train.dim(), data.train.classes(), mix_seed(seed));

    for (const std::string& dname : compared_defenses(cfg)) {
      Defense defense = defense_named(cfg, dname);
      std::vector<double> scores;
      std::vector<int> recon_labels, true_labels;
      int extractions = 0;
      int theorem3_ok = 0, theorem3_total = 0;

      for (int probe = 0; probe < cfg.privacy.probes; ++probe) {
        // matched probe stream: the sample does not depend on the defense
        Rng probe_rng = make_rng(seed, 0x9120be, static_cast<uint64_t>(probe));
        int row = std::uniform_int_distribution<int>(0, data.train.rows() - 1)(probe_rng);
        Tensor x = subset(data.train, {row}).X;
        Tensor y = subset(data.train, {row}).Y;

        Rng defense_rng = make_rng(seed, mix_seed(std::hash<std::string>{}(dname)),
                                   static_cast<uint64_t>(probe));
        Tensor xd = x, yd = y;
        bool have_pseudo = false;
        if (defense.kind == DefenseKind::FedDef) {
          FedDefResult fd = feddef_transform(model, x, y, defense.feddef, defense_rng);
          xd = fd.x;
          yd = fd.y;
          have_pseudo = true;
        } else {
          defense.transform_batch(model, xd, yd, defense_rng);
        }
        GradientVector g = model_gradient(model, xd, yd);
        defense.transform_gradient(g, defense_rng);
        LeakedUpdate update{std::move(g), 1};

        InversionConfig inv;
        inv.metric = cfg.privacy.metric;
        inv.steps = cfg.privacy.steps;
        inv.lr = cfg.privacy.lr;
        inv.restarts = cfg.privacy.restarts;
        inv.seed = mix_seed(seed ^ static_cast<uint64_t>(probe) * 0x9e37ULL);
        inv.schema = &data.train.schema;
        ReconstructionResult recon = reconstruct(model, update, inv);

        Tensor x_canon = canonicalize(x, data.train.schema);
        double score = privacy_score(x_canon, recon.x, data.train.schema);
        if (score < 0.0 || score > 1.0)
          rep.violations.push_back("privacy score out of [0,1]: " + format_double(score));
        scores.push_back(score);
        recon_labels.push_back(recon.labels[0]);
        true_labels.push_back(y.argmax_row(0));
        if (recon.method == ReconstructionMethod::Extraction) ++extractions;

        if (have_pseudo) {
          GradientVector g_orig = model_gradient(model, x, y);
          Theorem3Inputs t3;
          t3.grad_W = g_orig.tensor(0);
          t3.grad_b = g_orig.tensor(1);
          t3.grad_W_prime = update.grad.tensor(0);
          t3.grad_b_prime = update.grad.tensor(1);
          t3.M = std::max(t3.grad_b.l2(), t3.grad_b_prime.l2());
          Theorem3Result t3r = theorem3_check(t3, x, xd);
          ++theorem3_total;
          if (t3r.holds)
            ++theorem3_ok;
          else
            rep.violations.push_back("theorem 3 violated on probe " + std::to_string(probe) +
                                     " (bound " + format_double(t3r.lower_bound) + ", measured " +
                                     format_double(t3r.measured) + ")");
        }

        probes_table.rows.push_back(
            {dname, std::to_string(seed), std::to_string(probe),
             recon.method == ReconstructionMethod::Extraction ? "extraction" : "inversion",
             format_double(score), recon.labels[0] == y.argmax_row(0) ? "1" : "0",
             format_double(recon.objective)});
      }

      double label_acc = label_accuracy(recon_labels, true_labels);
      summary_table.rows.push_back(
          {dname, std::to_string(seed), format_double(mean_of(scores)), format_double(label_acc),
           format_double(static_cast<double>(extractions) / cfg.privacy.probes),
           theorem3_total == 0 ? "n/a" : (theorem3_ok == theorem3_total ? "yes" : "NO")});
      rep.scalars["mean_score." + dname + ".seed" + std::to_string(seed)] = mean_of(scores);
      rep.scalars["label_acc." + dname + ".seed" + std::to_string(seed)] = label_acc;
    }
  }
  rep.tables["privacy_probes"] = std::move(probes_table);
  rep.tables["privacy_summary"] = std::move(summary_table);
  rep.timings["total_ms"] = now_ms() - t0;
  return rep;
}

namespace {

struct ReconPool {
  Tensor x;                  // canonicalized reconstructions
  std::vector<int> labels;   // reconstructed labels
  std::vector<int> truth;    // ground-truth labels of the probed rows
};

// early-stage per-sample reconstruction pool under a defense
ReconPool build_recon_pool(const Mlp& model, const PreparedData& data, const Defense& defense,
                           const EvadeSpec& spec, uint64_t seed) {
  ReconPool pool;
  pool.x = Tensor(spec.samples, data.train.dim());
  for (int i = 0; i < spec.samples; ++i) {
    Rng probe_rng = make_rng(seed, 0xeade, static_cast<uint64_t>(i));
    int row = std::uniform_int_distribution<int>(0, data.train.rows() - 1)(probe_rng);
    Tensor x = subset(data.train, {row}).X;
    Tensor y = subset(data.train, {row}).Y;
    Rng defense_rng = make_rng(seed, 0xdef2, static_cast<uint64_t>(i));
    LeakedUpdate update = leak_update(model, x, y, defense, defense_rng);
    InversionConfig inv;
    inv.steps = spec.recon_steps;
    inv.restarts = 2;
    inv.seed = mix_seed(seed + 0x77ULL * static_cast<uint64_t>(i));
    inv.schema = &data.train.schema;
    ReconstructionResult recon = reconstruct(model, update, inv);
    for (int c = 0; c < pool.x.cols(); ++c) pool.x.at(i, c) = recon.x.at(0, c);
    pool.labels.push_back(recon.labels[0]);
    pool.truth.push_back(y.argmax_row(0));
  }
  return pool;
}

Tensor rows_of(const Tensor& x, const std::vector<int>& rows) {
  Tensor out(static_cast<int>(rows.size()), x.cols());
  for (size_t i = 0; i < rows.size(); ++i)
    for (int c = 0; c < x.cols(); ++c) out.at(static_cast<int>(i), c) = x.at(rows[i], c);
  return out;
}

}  // namespace

ExperimentReport run_evasion(const ExperimentConfig& cfg) {
  validate_config(cfg);
  ExperimentReport rep;
  rep.name = cfg.name;
  rep.kind = "evade";
  rep.config_echo = config_echo_of(cfg);

  Table grid{{"defense", "target", "attack", "param", "samples", "acc", "er", "mean_score", "mean_l2"}, {}};
  Table gan_table{{"defense", "epoch", "mean_anomaly_score", "acc_dnn", "threshold"}, {}};
  std::vector<std::string> sample_lines;
  double t0 = now_ms();

  for (uint64_t seed : cfg.seeds) {
    PreparedData data = prepare_data(cfg.data, cfg.fl.clients, seed);
    int benign = data.benign_class;

    // trained victim classifier + benign-only anomaly detector
    FlConfig fl = cfg.fl;
    fl.seed = seed;
    fl.eval_every_round = false;
    FlResult trained = train(fl, data.shards, data.test, cfg.defense);
    const Mlp& victim = trained.model;

    std::vector<int> benign_rows;
    std::vector<int> lbls = data.train.labels();
    for (int r = 0; r < data.train.rows(); ++r)
      if (lbls[static_cast<size_t>(r)] == benign) benign_rows.push_back(r);
    if (benign_rows.size() < 8) fail("run_evasion: too few benign rows to train the anomaly detector");
    AnomalyAutoencoder ae = AnomalyAutoencoder::make(data.train.dim(), mix_seed(seed ^ 0xae));
    Tensor benign_x = rows_of(data.train.X, benign_rows);
    Rng ae_rng = make_rng(seed, 0xae);
    train_autoencoder(ae, benign_x, {}, ae_rng);
    calibrate_threshold(ae, benign_x, 0.99);

    // reconstructions leak from an early-stage (randomly initialized) model
    Mlp early_model = make_classifier(data.train.dim(), data.train.classes(), mix_seed(seed));

    for (const std::string& dname : compared_defenses(cfg)) {
      Defense defense = defense_named(cfg, dname);
      ReconPool pool = build_recon_pool(early_model, data, defense, cfg.evade, seed);

      auto emit = [&](const std::string& target, const std::string& attack, const std::string& param,
                      const EvasionReport& er_rep) {
        if (std::fabs((er_rep.acc + er_rep.er) - 1.0) > 1e-12)
          rep.violations.push_back("ER accounting broken for " + attack);
        for (size_t i = 0; i < er_rep.success.size(); ++i) {
          for (int c = 0; c < er_rep.x_adv.cols(); ++c) {
            double v = er_rep.x_adv.at(static_cast<int>(i), c);
            if (v < -1e-12 || v > 1.0 + 1e-12) {
              rep.violations.push_back("adversarial output escaped [0,1] for " + attack);
              break;
            }
          }
          nlohmann::json line;
          line["defense"] = dname;
          line["target"] = target;
          line["attack"] = attack;
          line["param"] = param;
          line["sample"] = i;
          line["success"] = static_cast<bool>(er_rep.success[i]);
          line["l2"] = format_double(er_rep.l2_dist[i]);
          line["score"] = format_double(er_rep.score[i]);
          sample_lines.push_back(line.dump());
        }
        double mean_l2 = mean_of(er_rep.l2_dist);
        grid.rows.push_back({dname, target, attack, param, std::to_string(er_rep.success.size()),
                             format_double(er_rep.acc), format_double(er_rep.er),
                             format_double(er_rep.mean_score), format_double(mean_l2)});
      };

      if (cfg.evade.whitebox) {
        // malicious-by-reconstructed-label rows feed the white-box suite
        std::vector<int> mal_rows;
        for (int r = 0; r < pool.x.rows(); ++r)
          if (pool.labels[static_cast<size_t>(r)] != benign) mal_rows.push_back(r);
        if (mal_rows.empty()) {
          grid.rows.push_back({dname, "dnn", "all", "-", "0", "1", "0", "0", "0"});
          rep.notes.push_back(dname + ": empty malicious pool, defense success");
        } else {
          Tensor mal = rows_of(pool.x, mal_rows);
          std::vector<int> mal_labels;
          for (int r : mal_rows) mal_labels.push_back(pool.labels[static_cast<size_t>(r)]);

          AttackConfig ac;
          ac.target = benign;
          ac.steps = cfg.evade.attack_steps;
          ac.alpha = cfg.evade.pgd_alpha;
          ac.seed = seed;

          // classifier suite
          {
            AttackConfig a = ac;
            a.kind = AttackKind::Fgsm;
            a.eps = 40.0 / 255.0;
            emit("dnn", "fgsm", "eps=40/255",
                 evaluate_classifier_evasion(victim, benign, mal, fgsm(victim, mal, a)));
            for (double eps : cfg.evade.eps_list) {
              a = ac;
              a.kind = AttackKind::Pgd;
              a.eps = eps;
              emit("dnn", "pgd", "eps=" + format_double(eps * 255.0) + "/255",
                   evaluate_classifier_evasion(victim, benign, mal, pgd(victim, mal, a)));
            }
            for (double c : cfg.evade.c_list) {
              a = ac;
              a.kind = AttackKind::Cw;
              a.c = c;
              emit("dnn", "cw", "c=" + format_double(c),
                   evaluate_classifier_evasion(victim, benign, mal, cw(victim, mal, a)));
            }
            a = ac;
            a.kind = AttackKind::DeepFool;
            a.eps = 40.0 / 255.0;
            emit("dnn", "deepfool", "eps=40/255",
                 evaluate_classifier_evasion(victim, benign, mal, deepfool(victim, mal, mal_labels, a)));
            a = ac;
            a.kind = AttackKind::AutoPgd;
            a.eps = 40.0 / 255.0;
            emit("dnn", "autopgd", "eps=40/255",
                 evaluate_classifier_evasion(victim, benign, mal, autopgd(victim, mal, mal_labels, a)));
          }
          // anomaly-detector suite (score-based FGSM/PGD/CW only)
          {
            AttackConfig a = ac;
            a.kind = AttackKind::Fgsm;
            a.eps = 40.0 / 255.0;
            emit("anomaly", "fgsm", "eps=40/255",
                 evaluate_anomaly_evasion(ae, mal, fgsm(ae, mal, a)));
            for (double eps : cfg.evade.eps_list) {
              a = ac;
              a.kind = AttackKind::Pgd;
              a.eps = eps;
              emit("anomaly", "pgd", "eps=" + format_double(eps * 255.0) + "/255",
                   evaluate_anomaly_evasion(ae, mal, pgd(ae, mal, a)));
            }
            for (double c : cfg.evade.c_list) {
              a = ac;
              a.kind = AttackKind::Cw;
              a.c = c;
              emit("anomaly", "cw", "c=" + format_double(c),
                   evaluate_anomaly_evasion(ae, mal, cw(ae, mal, a)));
            }
          }
        }
      }

      if (cfg.evade.blackbox) {
        try {
          GanAttackCurves curves = blackbox_gan(victim, ae, benign, pool.x, pool.labels,
                                                cfg.evade.gan_epochs, 100, mix_seed(seed ^ 0x9a4));
          for (size_t e = 0; e < curves.mean_score.size(); ++e)
            gan_table.rows.push_back({dname, std::to_string(e), format_double(curves.mean_score[e]),
                                      format_double(curves.acc_dnn[e]), format_double(ae.threshold)});
          rep.scalars["gan_er_anomaly." + dname + ".seed" + std::to_string(seed)] = curves.er_anomaly;
          rep.scalars["gan_er_dnn." + dname + ".seed" + std::to_string(seed)] = curves.er_dnn;
        } catch (const EmptyBenignPool&) {
          rep.notes.push_back(dname +
                              ": no reconstructions labeled benign, GAN attack impossible (defense success)");
          rep.scalars["gan_er_anomaly." + dname + ".seed" + std::to_string(seed)] = 0.0;
          rep.scalars["gan_er_dnn." + dname + ".seed" + std::to_string(seed)] = 0.0;
        }
      }
    }
  }
  rep.tables["evasion_grid"] = std::move(grid);
  rep.tables["gan_curves"] = std::move(gan_table);
  rep.jsonl["evasion_samples"] = std::move(sample_lines);
  rep.timings["total_ms"] = now_ms() - t0;
  return rep;
}

}  // namespace fednids
