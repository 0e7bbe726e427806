#include "fednids/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace fednids {

void FeatureSchema::validate() const {
  for (size_t i = 0; i < cols.size(); ++i) {
    const auto& c = cols[i];
    if (c.max < c.min)
      fail("schema: column " + std::to_string(i) + " (" + c.name + ") has max < min");
    if (c.kind == FeatureKind::Discrete &&
        (std::floor(c.min) != c.min || std::floor(c.max) != c.max))
      fail("schema: discrete column " + std::to_string(i) + " (" + c.name + ") has non-integer bounds");
  }
}

void save_schema(const std::string& path, const FeatureSchema& schema) {
  std::ofstream f(path);
  if (!f) fail("save_schema: cannot open " + path);
  f << "ncols=" << schema.cols.size() << "\n";
  for (size_t i = 0; i < schema.cols.size(); ++i) {
    const auto& c = schema.cols[i];
    f << "col." << i << ".name=" << c.name << "\n";
    f << "col." << i << ".kind=" << (c.kind == FeatureKind::Discrete ? "discrete" : "continuous") << "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", c.min);
    f << "col." << i << ".min=" << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.17g", c.max);
    f << "col." << i << ".max=" << buf << "\n";
  }
}

FeatureSchema load_schema(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail("load_schema: cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) fail("load_schema: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto it = kv.find("ncols");
  if (it == kv.end()) fail("load_schema: missing ncols");
  int n = std::stoi(it->second);
  FeatureSchema s;
  for (int i = 0; i < n; ++i) {
    std::string p = "col." + std::to_string(i) + ".";
    FeatureColumn c;
    c.name = kv.at(p + "name");
    c.kind = kv.at(p + "kind") == "discrete" ? FeatureKind::Discrete : FeatureKind::Continuous;
    c.min = std::stod(kv.at(p + "min"));
    c.max = std::stod(kv.at(p + "max"));
    s.cols.push_back(c);
  }
  s.validate();
  return s;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out(static_cast<size_t>(Y.rows()));
  for (int r = 0; r < Y.rows(); ++r) out[static_cast<size_t>(r)] = Y.argmax_row(r);
  return out;
}

Tensor one_hot(const std::vector<int>& labels, int n_classes) {
  Tensor y(static_cast<int>(labels.size()), n_classes);
  for (size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || labels[r] >= n_classes) fail("one_hot: label out of range");
    y.at(static_cast<int>(r), labels[r]) = 1.0;
  }
  return y;
}

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail("ingest_csv: cannot open " + path);
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    if (first) {
      t.header = cells;
      first = false;
    } else {
      t.rows.push_back(cells);
    }
  }
  if (t.header.empty()) fail("ingest_csv: missing header row in " + path);
  return t;
}

double parse_cell(const std::string& s, int row, int col) {
  const char* b = s.c_str();
  char* end = nullptr;
  double v = std::strtod(b, &end);
  if (end == b || *end != '\0')
    fail("ingest_csv: non-numeric cell '" + s + "' at row " + std::to_string(row) + ", column " +
         std::to_string(col));
  return v;
}

double normalize_value(double v, const FeatureColumn& c) {
  if (c.max == c.min) return 0.0;
  double x = (v - c.min) / (c.max - c.min);
  return std::min(1.0, std::max(0.0, x));
}

}  // namespace

SplitDataset ingest_csv(const std::string& path, const FeatureSchema& schema,
                        const std::string& label_column, const IngestOptions& opts) {
  schema.validate();
  CsvTable t = read_csv(path);
  int label_idx = -1;
  for (size_t i = 0; i < t.header.size(); ++i)
    if (t.header[i] == label_column) label_idx = static_cast<int>(i);
  if (label_idx < 0) fail("ingest_csv: label column '" + label_column + "' not found");
  if (static_cast<int>(t.header.size()) - 1 != schema.dim())
    fail("ingest_csv: schema has " + std::to_string(schema.dim()) + " columns but file has " +
         std::to_string(t.header.size() - 1) + " feature columns");

  SplitDataset out;
  for (size_t i = 0; i < schema.cols.size(); ++i)
    if (schema.cols[i].max == schema.cols[i].min)
      out.warnings.push_back("constant column '" + schema.cols[i].name + "' normalized to 0");

  // label mapping: explicit class list when given, otherwise sorted unique values
  std::vector<std::string> classes = opts.expected_classes;
  if (classes.empty()) {
    std::set<std::string> uniq;
    for (const auto& r : t.rows) uniq.insert(r[static_cast<size_t>(label_idx)]);
    classes.assign(uniq.begin(), uniq.end());
  }
  std::map<std::string, int> class_of;
  for (size_t i = 0; i < classes.size(); ++i) class_of[classes[i]] = static_cast<int>(i);

  int n = static_cast<int>(t.rows.size());
  int dim = schema.dim();
  Tensor X(n, dim);
  std::vector<int> labels(static_cast<size_t>(n));
  for (int r = 0; r < n; ++r) {
    const auto& cells = t.rows[static_cast<size_t>(r)];
    if (static_cast<int>(cells.size()) != dim + 1)
      fail("ingest_csv: row " + std::to_string(r) + " has " + std::to_string(cells.size()) +
           " cells, expected " + std::to_string(dim + 1));
    int fcol = 0;
    for (int c = 0; c < static_cast<int>(cells.size()); ++c) {
      if (c == label_idx) continue;
      double v = parse_cell(cells[static_cast<size_t>(c)], r, c);
      X.at(r, fcol) = normalize_value(v, schema.cols[static_cast<size_t>(fcol)]);
      ++fcol;
    }
    auto it = class_of.find(cells[static_cast<size_t>(label_idx)]);
    if (it == class_of.end())
      fail("ingest_csv: unknown label value '" + cells[static_cast<size_t>(label_idx)] + "' at row " +
           std::to_string(r));
    labels[static_cast<size_t>(r)] = it->second;
  }

  // seeded shuffle, then 7:3 (train_frac) split
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng = make_rng(opts.seed, 0xc5f);
  std::shuffle(order.begin(), order.end(), rng);
  int n_train = static_cast<int>(std::lround(opts.train_frac * n));
  n_train = std::min(std::max(n_train, 0), n);

  auto build = [&](int lo, int hi) {
    Dataset d;
    d.schema = schema;
    d.class_names = classes;
    d.X = Tensor(hi - lo, dim);
    std::vector<int> ls(static_cast<size_t>(hi - lo));
    for (int i = lo; i < hi; ++i) {
      int src = order[static_cast<size_t>(i)];
      for (int c = 0; c < dim; ++c) d.X.at(i - lo, c) = X.at(src, c);
      ls[static_cast<size_t>(i - lo)] = labels[static_cast<size_t>(src)];
    }
    d.Y = one_hot(ls, static_cast<int>(classes.size()));
    return d;
  };
  out.train = build(0, n_train);
  out.test = build(n_train, n);
  return out;
}

FeatureSchema infer_schema(const std::string& csv_path, const std::string& label_column,
                           const std::vector<int>& discrete_hint) {
  CsvTable t = read_csv(csv_path);
  int label_idx = -1;
  for (size_t i = 0; i < t.header.size(); ++i)
    if (t.header[i] == label_column) label_idx = static_cast<int>(i);
  if (label_idx < 0) fail("infer_schema: label column '" + label_column + "' not found");
  std::set<int> hint(discrete_hint.begin(), discrete_hint.end());

  FeatureSchema s;
  int fcol = 0;
  for (int c = 0; c < static_cast<int>(t.header.size()); ++c) {
    if (c == label_idx) continue;
    FeatureColumn col;
    col.name = t.header[static_cast<size_t>(c)];
    double mn = 0, mx = 0;
    bool integral = true, first = true;
    for (size_t r = 0; r < t.rows.size(); ++r) {
      double v = parse_cell(t.rows[r][static_cast<size_t>(c)], static_cast<int>(r), c);
      if (first) {
        mn = mx = v;
        first = false;
      } else {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
      }
      if (std::floor(v) != v) integral = false;
    }
    col.min = mn;
    col.max = mx;
    col.kind = (integral || hint.count(fcol)) ? FeatureKind::Discrete : FeatureKind::Continuous;
    if (col.kind == FeatureKind::Discrete) {
      col.min = std::floor(col.min);
      col.max = std::ceil(col.max);
    }
    s.cols.push_back(col);
    ++fcol;
  }
  return s;
}

std::string PartitionPlan::to_json() const {
  nlohmann::json j;
  j["mode"] = mode == PartitionMode::Iid ? "iid" : "non-iid";
  j["clients"] = client_rows;
  return j.dump(2);
}

PartitionPlan partition(const Dataset& ds, int n_clients, PartitionMode mode, uint64_t seed,
                        int p_attack_types, int benign_class) {
  if (n_clients < 1) fail("partition: need at least one client");
  if (n_clients > ds.rows()) fail("partition: more clients than rows");
  PartitionPlan plan;
  plan.mode = mode;
  plan.client_rows.assign(static_cast<size_t>(n_clients), {});
  Rng rng = make_rng(seed, 0x9a7);

  if (mode == PartitionMode::Iid) {
    std::vector<int> order(static_cast<size_t>(ds.rows()));
    for (int i = 0; i < ds.rows(); ++i) order[static_cast<size_t>(i)] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (int i = 0; i < ds.rows(); ++i)
      plan.client_rows[static_cast<size_t>(i % n_clients)].push_back(order[static_cast<size_t>(i)]);
  } else {
    std::vector<int> labels = ds.labels();
    std::vector<std::vector<int>> by_class(static_cast<size_t>(ds.classes()));
    for (int r = 0; r < ds.rows(); ++r) by_class[static_cast<size_t>(labels[static_cast<size_t>(r)])].push_back(r);
    std::vector<int> attack_types;
    for (int c = 0; c < ds.classes(); ++c)
      if (c != benign_class && !by_class[static_cast<size_t>(c)].empty()) attack_types.push_back(c);
    if (attack_types.empty()) fail("partition: non-iid mode needs at least one attack class");
    int p = p_attack_types > 0 ? p_attack_types
                               : static_cast<int>((attack_types.size() + 1) / 2);  // default ceil(types/2)
    p = std::min(p, static_cast<int>(attack_types.size()));

    // chunk every class into n_clients pieces; clients consume their own piece
    std::vector<std::vector<std::vector<int>>> chunks(static_cast<size_t>(ds.classes()));
    for (int c = 0; c < ds.classes(); ++c) {
      auto rows = by_class[static_cast<size_t>(c)];
      std::shuffle(rows.begin(), rows.end(), rng);
      chunks[static_cast<size_t>(c)].assign(static_cast<size_t>(n_clients), {});
      for (size_t i = 0; i < rows.size(); ++i)
        chunks[static_cast<size_t>(c)][i % static_cast<size_t>(n_clients)].push_back(rows[i]);
    }
    for (int k = 0; k < n_clients; ++k) {
      auto& mine = plan.client_rows[static_cast<size_t>(k)];
      const auto& benign_chunk = chunks[static_cast<size_t>(benign_class)][static_cast<size_t>(k)];
      mine.insert(mine.end(), benign_chunk.begin(), benign_chunk.end());
      std::vector<int> pool = attack_types;
      std::shuffle(pool.begin(), pool.end(), rng);
      for (int i = 0; i < p; ++i) {
        const auto& ch = chunks[static_cast<size_t>(pool[static_cast<size_t>(i)])][static_cast<size_t>(k)];
        mine.insert(mine.end(), ch.begin(), ch.end());
      }
    }
  }
  for (auto& rows : plan.client_rows)
    if (rows.empty()) fail("partition: produced an empty shard (too few rows?)");
  return plan;
}

Dataset subset(const Dataset& ds, const std::vector<int>& rows) {
  Dataset out;
  out.schema = ds.schema;
  out.class_names = ds.class_names;
  out.X = Tensor(static_cast<int>(rows.size()), ds.dim());
  out.Y = Tensor(static_cast<int>(rows.size()), ds.classes());
  for (size_t i = 0; i < rows.size(); ++i) {
    int r = rows[i];
    if (r < 0 || r >= ds.rows()) fail("subset: row index out of range");
    for (int c = 0; c < ds.dim(); ++c) out.X.at(static_cast<int>(i), c) = ds.X.at(r, c);
    for (int c = 0; c < ds.classes(); ++c) out.Y.at(static_cast<int>(i), c) = ds.Y.at(r, c);
  }
  return out;
}

Dataset localize(const Dataset& shard) {
  Dataset out = shard;
  for (int c = 0; c < shard.dim(); ++c) {
    const FeatureColumn& gc = shard.schema.cols[static_cast<size_t>(c)];
    double mn = 0, mx = 0;
    for (int r = 0; r < shard.rows(); ++r) {
      double orig = gc.min + shard.X.at(r, c) * (gc.max - gc.min);
      if (r == 0) {
        mn = mx = orig;
      } else {
        mn = std::min(mn, orig);
        mx = std::max(mx, orig);
      }
    }
    FeatureColumn& lc = out.schema.cols[static_cast<size_t>(c)];
    if (lc.kind == FeatureKind::Discrete) {
      mn = std::floor(mn);
      mx = std::ceil(mx);
    }
    lc.min = mn;
    lc.max = mx;
    for (int r = 0; r < shard.rows(); ++r) {
      double orig = gc.min + shard.X.at(r, c) * (gc.max - gc.min);
      out.X.at(r, c) = mx == mn ? 0.0 : (orig - mn) / (mx - mn);
    }
  }
  return out;
}

std::vector<double> project_to_original(const Tensor& x, int row, const FeatureSchema& schema) {
  if (x.cols() != schema.dim()) fail("project_to_original: row length != schema dim");
  std::vector<double> out(static_cast<size_t>(schema.dim()));
  for (int c = 0; c < schema.dim(); ++c) {
    const auto& col = schema.cols[static_cast<size_t>(c)];
    double v = std::min(1.0, std::max(0.0, x.at(row, c)));
    out[static_cast<size_t>(c)] = col.min + v * (col.max - col.min);
  }
  return out;
}

void canonicalize_row(Tensor& x, int row, const FeatureSchema& schema) {
  if (x.cols() != schema.dim()) fail("canonicalize: row length != schema dim");
  for (int c = 0; c < schema.dim(); ++c) {
    const auto& col = schema.cols[static_cast<size_t>(c)];
    double v = std::min(1.0, std::max(0.0, x.at(row, c)));
    if (col.kind == FeatureKind::Discrete && col.max > col.min) {
      double orig = col.min + v * (col.max - col.min);
      double r = std::min(col.max, std::max(col.min, std::round(orig)));
      v = (r - col.min) / (col.max - col.min);
    } else if (col.kind == FeatureKind::Discrete) {
      v = 0.0;
    }
    x.at(row, c) = v;
  }
}

Tensor canonicalize(const Tensor& x, const FeatureSchema& schema) {
  Tensor out = x;
  for (int r = 0; r < out.rows(); ++r) canonicalize_row(out, r, schema);
  return out;
}

Dataset synth_dataset(const SynthSpec& spec) {
  if (spec.dim < 1 || spec.n_classes < 1 || spec.rows < spec.n_classes)
    fail("synth_dataset: bad spec");
  Rng rng = make_rng(spec.seed, 0x5e7);
  std::set<int> discrete(spec.discrete_cols.begin(), spec.discrete_cols.end());

  // class centers with a minimum pairwise distance
  double min_dist = spec.sep * spec.sigma * std::sqrt(static_cast<double>(spec.dim));
  std::vector<std::vector<double>> centers;
  for (int k = 0; k < spec.n_classes; ++k) {
    std::vector<double> best;
    for (int attempt = 0; attempt < 300; ++attempt) {
      std::vector<double> c(static_cast<size_t>(spec.dim));
      std::uniform_real_distribution<double> d(0.15, 0.85);
      for (auto& v : c) v = d(rng);
      double closest = 1e300;
      for (const auto& o : centers) {
        double s = 0;
        for (int i = 0; i < spec.dim; ++i) s += (c[static_cast<size_t>(i)] - o[static_cast<size_t>(i)]) *
                                                (c[static_cast<size_t>(i)] - o[static_cast<size_t>(i)]);
        closest = std::min(closest, std::sqrt(s));
      }
      best = c;
      if (centers.empty() || closest >= min_dist) break;
    }
    centers.push_back(best);
  }

  // class sizes: benign_frac for class 0, rest split evenly
  std::vector<int> sizes(static_cast<size_t>(spec.n_classes), 0);
  if (spec.n_classes == 1) {
    sizes[0] = spec.rows;
  } else {
    sizes[0] = std::max(1, static_cast<int>(std::lround(spec.benign_frac * spec.rows)));
    int rest = spec.rows - sizes[0];
    for (int k = 1; k < spec.n_classes; ++k) sizes[static_cast<size_t>(k)] = rest / (spec.n_classes - 1);
    for (int k = 1; k <= rest % (spec.n_classes - 1); ++k) sizes[static_cast<size_t>(k)] += 1;
  }

  Dataset ds;
  ds.X = Tensor(spec.rows, spec.dim);
  std::vector<int> labels;
  labels.reserve(static_cast<size_t>(spec.rows));
  std::normal_distribution<double> noise(0.0, spec.sigma);
  int r = 0;
  for (int k = 0; k < spec.n_classes; ++k)
    for (int i = 0; i < sizes[static_cast<size_t>(k)]; ++i, ++r) {
      for (int c = 0; c < spec.dim; ++c) {
        double v = centers[static_cast<size_t>(k)][static_cast<size_t>(c)] + noise(rng);
        v = std::min(1.0, std::max(0.0, v));
        if (discrete.count(c)) {
          double lv = std::round(v * (spec.discrete_levels - 1));
          v = lv / (spec.discrete_levels - 1);
        }
        ds.X.at(r, c) = v;
      }
      labels.push_back(k);
    }

  // shuffle rows so shards and batches mix classes
  std::vector<int> order(static_cast<size_t>(spec.rows));
  for (int i = 0; i < spec.rows; ++i) order[static_cast<size_t>(i)] = i;
  std::shuffle(order.begin(), order.end(), rng);
  Tensor X2(spec.rows, spec.dim);
  std::vector<int> l2(static_cast<size_t>(spec.rows));
  for (int i = 0; i < spec.rows; ++i) {
    for (int c = 0; c < spec.dim; ++c) X2.at(i, c) = ds.X.at(order[static_cast<size_t>(i)], c);
    l2[static_cast<size_t>(i)] = labels[static_cast<size_t>(order[static_cast<size_t>(i)])];
  }
  ds.X = std::move(X2);
  ds.Y = one_hot(l2, spec.n_classes);

  for (int c = 0; c < spec.dim; ++c) {
    FeatureColumn col;
    col.name = "f" + std::to_string(c);
    if (discrete.count(c)) {
      col.kind = FeatureKind::Discrete;
      col.min = 0;
      col.max = spec.discrete_levels - 1;
    } else {
      col.kind = FeatureKind::Continuous;
      col.min = 0;
      col.max = 1;
    }
    ds.schema.cols.push_back(col);
  }
  for (int k = 0; k < spec.n_classes; ++k) {
    if (k == 0) {
      ds.class_names.push_back("benign");
    } else {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "attack%02d", k);
      ds.class_names.push_back(buf);
    }
  }
  return ds;
}

Dataset stratified_cap(const Dataset& ds, int cap, uint64_t seed) {
  if (ds.rows() <= cap) return ds;
  Rng rng = make_rng(seed, 0xcab);
  std::vector<int> labels = ds.labels();
  std::vector<std::vector<int>> by_class(static_cast<size_t>(ds.classes()));
  for (int r = 0; r < ds.rows(); ++r) by_class[static_cast<size_t>(labels[static_cast<size_t>(r)])].push_back(r);
  double frac = static_cast<double>(cap) / ds.rows();
  std::vector<int> keep;
  for (auto& rows : by_class) {
    std::shuffle(rows.begin(), rows.end(), rng);
    int take = std::max(rows.empty() ? 0 : 1, static_cast<int>(std::lround(frac * rows.size())));
    take = std::min(take, static_cast<int>(rows.size()));
    keep.insert(keep.end(), rows.begin(), rows.begin() + take);
  }
  std::sort(keep.begin(), keep.end());
  return subset(ds, keep);
}

int benign_class_of(const Dataset& ds) {
  for (size_t i = 0; i < ds.class_names.size(); ++i)
    if (ds.class_names[i] == "benign" || ds.class_names[i] == "normal" || ds.class_names[i] == "normal.")
      return static_cast<int>(i);
  return 0;
}

void export_original_csv(const std::string& path, const Dataset& ds, const std::string& label_column) {
  std::ofstream f(path);
  if (!f) fail("export_original_csv: cannot open " + path);
  for (int c = 0; c < ds.dim(); ++c) f << ds.schema.cols[static_cast<size_t>(c)].name << ",";
  f << label_column << "\n";
  std::vector<int> labels = ds.labels();
  char buf[64];
  for (int r = 0; r < ds.rows(); ++r) {
    auto orig = project_to_original(ds.X, r, ds.schema);
    for (int c = 0; c < ds.dim(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", orig[static_cast<size_t>(c)]);
      f << buf << ",";
    }
    f << ds.class_names[static_cast<size_t>(labels[static_cast<size_t>(r)])] << "\n";
  }
}

}  // namespace fednids
