#include "blufs/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "blufs/eval.hpp"
#include "blufs/graph.hpp"
#include "blufs/selection.hpp"

namespace blufs {

using nlohmann::json;

std::string RunConfig::dataset_name() const {
  if (synthetic) return to_string(synthetic->kind);
  if (dataset_path)
    return std::filesystem::path(*dataset_path).stem().string();
  return "unknown";
}

Command command_from_string(const std::string& name) {
  if (name == "synth") return Command::Synth;
  if (name == "select") return Command::Select;
  if (name == "eval-cluster") return Command::EvalCluster;
  if (name == "eval-classify") return Command::EvalClassify;
  if (name == "grid") return Command::Grid;
  if (name == "trace") return Command::Trace;
  throw ConfigError("unknown command '" + name + "'");
}

const char* to_string(Command cmd) {
  switch (cmd) {
    case Command::Synth: return "synth";
    case Command::Select: return "select";
    case Command::EvalCluster: return "eval-cluster";
    case Command::EvalClassify: return "eval-classify";
    case Command::Grid: return "grid";
    case Command::Trace: return "trace";
  }
  return "select";
}

namespace {

void check_keys(const json& j, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) {
          return key == a;
        }) == allowed.end())
      throw ConfigError("unknown key '" + key + "' in " + ctx);
  }
}

[[noreturn]] void type_error(const std::string& key, const std::string& want) {
  throw ConfigError("config key '" + key + "': expected " + want);
}

double get_number(const json& j, const std::string& key) {
  if (!j.is_number()) type_error(key, "a number");
  return j.get<double>();
}

long long get_integer(const json& j, const std::string& key) {
  if (!j.is_number_integer()) type_error(key, "an integer");
  return j.get<long long>();
}

bool get_bool(const json& j, const std::string& key) {
  if (!j.is_boolean()) type_error(key, "a boolean");
  return j.get<bool>();
}

std::string get_string(const json& j, const std::string& key) {
  if (!j.is_string()) type_error(key, "a string");
  return j.get<std::string>();
}

SyntheticSpec parse_synthetic(const json& j) {
  if (!j.is_object()) type_error("dataset.synthetic", "an object");
  check_keys(j, "'dataset.synthetic'",
             {"kind", "samples_per_class", "noise_features", "noise_sigma",
              "seed"});
  SyntheticSpec spec;
  if (j.contains("kind"))
    spec.kind = synthetic_kind_from_string(
        get_string(j["kind"], "dataset.synthetic.kind"));
  if (j.contains("samples_per_class")) {
    spec.samples_per_class = static_cast<int>(get_integer(
        j["samples_per_class"], "dataset.synthetic.samples_per_class"));
    if (spec.samples_per_class < 1)
      throw ConfigError(
          "config key 'dataset.synthetic.samples_per_class': must be >= 1");
  }
  if (j.contains("noise_features")) {
    spec.noise_features = static_cast<int>(
        get_integer(j["noise_features"], "dataset.synthetic.noise_features"));
    if (spec.noise_features < 0)
      throw ConfigError(
          "config key 'dataset.synthetic.noise_features': must be >= 0");
  }
  if (j.contains("noise_sigma")) {
    spec.noise_sigma =
        get_number(j["noise_sigma"], "dataset.synthetic.noise_sigma");
    if (spec.noise_sigma <= 0)
      throw ConfigError(
          "config key 'dataset.synthetic.noise_sigma': must be > 0");
  }
  if (j.contains("seed"))
    spec.seed = static_cast<std::uint64_t>(
        get_integer(j["seed"], "dataset.synthetic.seed"));
  return spec;
}

void parse_blufs(const json& j, BlufsConfig& cfg, bool* s_given,
                 bool* seed_given) {
  if (!j.is_object()) type_error("blufs", "an object");
  check_keys(j, "'blufs'",
             {"lambda", "alpha", "beta", "mu", "s", "k", "clusters", "tau1",
              "tau2", "tau3", "theta", "rho", "sigma", "outer_max_iter",
              "outer_tol", "inner_max_iter", "inner_tol", "seed", "ablation"});
  auto num = [&](const char* key, double& out) {
    if (j.contains(key)) out = get_number(j[key], std::string("blufs.") + key);
  };
  auto integer = [&](const char* key, int& out) {
    if (j.contains(key))
      out = static_cast<int>(get_integer(j[key], std::string("blufs.") + key));
  };
  num("lambda", cfg.lambda);
  num("alpha", cfg.alpha);
  num("beta", cfg.beta);
  num("mu", cfg.mu);
  if (j.contains("s")) {
    cfg.s = static_cast<int>(get_integer(j["s"], "blufs.s"));
    *s_given = true;
  }
  integer("k", cfg.k);
  integer("clusters", cfg.clusters);
  num("tau1", cfg.tau1);
  num("tau2", cfg.tau2);
  num("tau3", cfg.tau3);
  num("theta", cfg.theta);
  if (j.contains("rho") && !j["rho"].is_null())
    cfg.rho = get_number(j["rho"], "blufs.rho");
  if (j.contains("sigma") && !j["sigma"].is_null())
    cfg.sigma = get_number(j["sigma"], "blufs.sigma");
  integer("outer_max_iter", cfg.outer_max_iter);
  num("outer_tol", cfg.outer_tol);
  integer("inner_max_iter", cfg.inner_max_iter);
  num("inner_tol", cfg.inner_tol);
  if (j.contains("seed")) {
    cfg.seed = static_cast<std::uint64_t>(get_integer(j["seed"], "blufs.seed"));
    *seed_given = true;
  }
  if (j.contains("ablation"))
    cfg.ablation = ablation_from_string(
        get_string(j["ablation"], "blufs.ablation"));
}

void parse_eval(const json& j, EvalConfig& cfg, bool* seeds_given,
                bool* repeats_given) {
  if (!j.is_object()) type_error("eval", "an object");
  check_keys(j, "'eval'",
             {"feature_counts", "repeats", "seeds", "split_fraction", "knn_k",
              "classify_repeats"});
  if (j.contains("feature_counts")) {
    if (!j["feature_counts"].is_array())
      type_error("eval.feature_counts", "an array of integers");
    cfg.feature_counts.clear();
    for (const auto& v : j["feature_counts"]) {
      const int m = static_cast<int>(get_integer(v, "eval.feature_counts"));
      if (m < 1)
        throw ConfigError("config key 'eval.feature_counts': entries must be >= 1");
      cfg.feature_counts.push_back(m);
    }
    if (cfg.feature_counts.empty())
      throw ConfigError("config key 'eval.feature_counts': must be nonempty");
  }
  if (j.contains("repeats")) {
    cfg.repeats = static_cast<int>(get_integer(j["repeats"], "eval.repeats"));
    if (cfg.repeats < 1)
      throw ConfigError("config key 'eval.repeats': must be >= 1");
    *repeats_given = true;
  }
  if (j.contains("seeds")) {
    if (!j["seeds"].is_array())
      type_error("eval.seeds", "an array of integers");
    cfg.seeds.clear();
    for (const auto& v : j["seeds"])
      cfg.seeds.push_back(
          static_cast<std::uint64_t>(get_integer(v, "eval.seeds")));
    if (cfg.seeds.empty())
      throw ConfigError("config key 'eval.seeds': must be nonempty");
    *seeds_given = true;
  }
  if (j.contains("split_fraction")) {
    cfg.split_fraction = get_number(j["split_fraction"], "eval.split_fraction");
    if (!(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0))
      throw ConfigError(
          "config key 'eval.split_fraction': must lie in (0, 1)");
  }
  if (j.contains("knn_k")) {
    cfg.knn_k = static_cast<int>(get_integer(j["knn_k"], "eval.knn_k"));
    if (cfg.knn_k < 1)
      throw ConfigError("config key 'eval.knn_k': must be >= 1");
  }
  if (j.contains("classify_repeats")) {
    cfg.classify_repeats = static_cast<int>(
        get_integer(j["classify_repeats"], "eval.classify_repeats"));
    if (cfg.classify_repeats < 1)
      throw ConfigError("config key 'eval.classify_repeats': must be >= 1");
  }
}

RunConfig parse_config_object(const json& root) {
  if (!root.is_object())
    throw ConfigError("config document must be a JSON object");
  check_keys(root, "the config",
             {"dataset", "s", "clusters", "seed", "method", "standardize",
              "blufs", "eval", "output_dir", "workers", "coarse"});

  RunConfig cfg;
  bool s_given = false, seed_given = false;
  bool eval_seeds_given = false, eval_repeats_given = false;

  if (!root.contains("dataset"))
    throw ConfigError("missing required key 'dataset'");
  const json& ds = root["dataset"];
  if (ds.is_string()) {
    cfg.dataset_path = ds.get<std::string>();
  } else if (ds.is_object()) {
    check_keys(ds, "'dataset'", {"path", "synthetic"});
    if (ds.contains("path") == ds.contains("synthetic"))
      throw ConfigError(
          "config key 'dataset': exactly one of 'path' or 'synthetic' required");
    if (ds.contains("path"))
      cfg.dataset_path = get_string(ds["path"], "dataset.path");
    else
      cfg.synthetic = parse_synthetic(ds["synthetic"]);
  } else {
    type_error("dataset", "a path string or an object");
  }

  if (root.contains("blufs"))
    parse_blufs(root["blufs"], cfg.blufs, &s_given, &seed_given);
  if (root.contains("s")) {
    if (s_given)
      throw ConfigError("config key 's': specified both at top level and in 'blufs'");
    cfg.blufs.s = static_cast<int>(get_integer(root["s"], "s"));
    s_given = true;
  }
  if (root.contains("clusters")) {
    if (cfg.blufs.clusters != 0)
      throw ConfigError(
          "config key 'clusters': specified both at top level and in 'blufs'");
    cfg.blufs.clusters =
        static_cast<int>(get_integer(root["clusters"], "clusters"));
  }
  if (root.contains("seed")) {
    if (seed_given)
      throw ConfigError(
          "config key 'seed': specified both at top level and in 'blufs'");
    cfg.blufs.seed =
        static_cast<std::uint64_t>(get_integer(root["seed"], "seed"));
    seed_given = true;
  }
  if (root.contains("method")) {
    cfg.method = get_string(root["method"], "method");
    if (cfg.method != "blufs" && cfg.method != "lapscore")
      throw ConfigError("config key 'method': expected 'blufs' or 'lapscore'");
  }
  if (root.contains("standardize"))
    cfg.standardize_features = get_bool(root["standardize"], "standardize");
  if (root.contains("eval"))
    parse_eval(root["eval"], cfg.eval, &eval_seeds_given, &eval_repeats_given);
  if (root.contains("output_dir"))
    cfg.output_dir = get_string(root["output_dir"], "output_dir");
  if (root.contains("workers")) {
    cfg.workers = static_cast<int>(get_integer(root["workers"], "workers"));
    if (cfg.workers < 0)
      throw ConfigError("config key 'workers': must be >= 0");
  }
  if (root.contains("coarse")) cfg.coarse = get_bool(root["coarse"], "coarse");

  // Late validation and default resolution.
  if (cfg.method == "blufs") {
    if (!s_given) throw ConfigError("missing required key 's'");
    if (cfg.blufs.s < 1) throw ConfigError("config key 's': must be >= 1");
  } else if (s_given && cfg.blufs.s < 1) {
    throw ConfigError("config key 's': must be >= 1");
  }
  if (cfg.synthetic && !root["dataset"]["synthetic"].contains("seed"))
    cfg.synthetic->seed = cfg.blufs.seed;
  if (cfg.eval.feature_counts.empty())
    for (int m = 10; m <= 100; m += 10) cfg.eval.feature_counts.push_back(m);
  if (eval_seeds_given) {
    if (eval_repeats_given &&
        cfg.eval.repeats != static_cast<int>(cfg.eval.seeds.size()))
      throw ConfigError(
          "config key 'eval.repeats': must equal the number of eval.seeds");
    cfg.eval.repeats = static_cast<int>(cfg.eval.seeds.size());
  } else {
    cfg.eval.seeds.clear();
    for (int r = 0; r < cfg.eval.repeats; ++r)
      cfg.eval.seeds.push_back(cfg.blufs.seed + static_cast<std::uint64_t>(r));
  }
  return cfg;
}

json to_json(const RunConfig& cfg) {
  json dataset;
  if (cfg.synthetic) {
    dataset["synthetic"] = {
        {"kind", to_string(cfg.synthetic->kind)},
        {"samples_per_class", cfg.synthetic->samples_per_class},
        {"noise_features", cfg.synthetic->noise_features},
        {"noise_sigma", cfg.synthetic->noise_sigma},
        {"seed", cfg.synthetic->seed}};
  } else {
    dataset["path"] = cfg.dataset_path.value_or("");
  }
  json blufs_cfg = {{"lambda", cfg.blufs.lambda},
                    {"alpha", cfg.blufs.alpha},
                    {"beta", cfg.blufs.beta},
                    {"mu", cfg.blufs.mu},
                    {"s", cfg.blufs.s},
                    {"k", cfg.blufs.k},
                    {"clusters", cfg.blufs.clusters},
                    {"tau1", cfg.blufs.tau1},
                    {"tau2", cfg.blufs.tau2},
                    {"tau3", cfg.blufs.tau3},
                    {"theta", cfg.blufs.theta},
                    {"outer_max_iter", cfg.blufs.outer_max_iter},
                    {"outer_tol", cfg.blufs.outer_tol},
                    {"inner_max_iter", cfg.blufs.inner_max_iter},
                    {"inner_tol", cfg.blufs.inner_tol},
                    {"seed", cfg.blufs.seed},
                    {"ablation", to_string(cfg.blufs.ablation)}};
  blufs_cfg["rho"] = cfg.blufs.rho ? json(*cfg.blufs.rho) : json(nullptr);
  blufs_cfg["sigma"] = cfg.blufs.sigma ? json(*cfg.blufs.sigma) : json(nullptr);
  json eval_cfg = {{"feature_counts", cfg.eval.feature_counts},
                   {"repeats", cfg.eval.repeats},
                   {"seeds", cfg.eval.seeds},
                   {"split_fraction", cfg.eval.split_fraction},
                   {"knn_k", cfg.eval.knn_k},
                   {"classify_repeats", cfg.eval.classify_repeats}};
  return json{{"dataset", dataset},
              {"method", cfg.method},
              {"standardize", cfg.standardize_features},
              {"blufs", blufs_cfg},
              {"eval", eval_cfg},
              {"output_dir", cfg.output_dir},
              {"workers", cfg.workers},
              {"coarse", cfg.coarse}};
}

struct LoadedData {
  Dataset ds;        // solver-facing (standardized unless disabled)
  std::string name;
};

LoadedData load_input(const RunConfig& cfg) {
  LoadedData out;
  Dataset raw;
  if (cfg.synthetic)
    raw = gen_synthetic(*cfg.synthetic);
  else if (cfg.dataset_path)
    raw = load_dataset(*cfg.dataset_path);
  else
    throw ConfigError("missing required key 'dataset'");
  out.ds = cfg.standardize_features ? rescale_unit(raw) : std::move(raw);
  out.name = cfg.dataset_name();
  return out;
}

int resolve_clusters(const RunConfig& cfg, const Dataset& ds) {
  if (cfg.blufs.clusters > 0) return cfg.blufs.clusters;
  if (ds.class_count) return *ds.class_count;
  throw ConfigError(
      "config key 'clusters': required when the dataset has no labels");
}

int resolve_workers(const RunConfig& cfg) {
  if (cfg.workers > 0) return cfg.workers;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

struct GraphBundle {
  SimilarityGraph graph;
  NormalizedAffinity affinity;
};

GraphBundle build_graph(const Dataset& ds, const BlufsConfig& bc) {
  GraphBundle out;
  out.graph = build_similarity(ds.features, bc.k, bc.sigma);
  out.affinity = normalize_affinity(out.graph);
  return out;
}

RankingProducer make_producer(const RunConfig& cfg, SolverState* captured) {
  return [cfg, captured](const Dataset& ds) -> FeatureRanking {
    BlufsConfig bc = cfg.blufs;
    bc.clusters = resolve_clusters(cfg, ds);
    const GraphBundle bundle = build_graph(ds, bc);
    if (cfg.method == "lapscore")
      return lapscore(ds.features, bundle.graph,
                      static_cast<int>(ds.dim()));
    SolverState state = run_pam(ds.features, bundle.affinity, bc);
    FeatureRanking ranking = feature_ranking(state.W);
    if (captured) *captured = std::move(state);
    return ranking;
  };
}

void write_metadata(Command cmd, const RunConfig& cfg,
                    const std::filesystem::path& path) {
  json doc;
  doc["blufs_version"] = std::string(kVersion);
  doc["command"] = to_string(cmd);
  doc["dataset"] = cfg.dataset_name();
  doc["config"] = to_json(cfg);
  doc["config_hash"] = config_hash(cfg);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

struct GridCell {
  double lambda, alpha, beta, mu;
  double acc_mean = 0.0, acc_std = 0.0;
  int support = 0;
};

std::vector<double> grid_values() {
  return {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
}

void run_grid_cells(const RunConfig& cfg, const Dataset& ds,
                    const GraphBundle& bundle, int clusters,
                    std::vector<GridCell>& cells) {
  const int workers = resolve_workers(cfg);
  parallel_for(static_cast<int>(cells.size()), workers, [&](int t) {
    GridCell& cell = cells[static_cast<std::size_t>(t)];
    BlufsConfig bc = cfg.blufs;
    bc.lambda = cell.lambda;
    bc.alpha = cell.alpha;
    bc.beta = cell.beta;
    bc.mu = cell.mu;
    bc.clusters = clusters;
    const SolverState state = run_pam(ds.features, bundle.affinity, bc);
    const FeatureRanking ranking = feature_ranking(state.W);
    cell.support = static_cast<int>(ranking.selected.size());
    if (ranking.selected.empty()) return;  // degenerate cell scores 0
    const Dataset reduced =
        reduce(ds, ranking, std::min<int>(bc.s, static_cast<int>(ds.dim())));
    std::vector<double> accs;
    accs.reserve(cfg.eval.seeds.size());
    for (const std::uint64_t seed : cfg.eval.seeds) {
      const std::vector<int> pred = kmeans(reduced.features, clusters, seed);
      accs.push_back(acc(pred, *ds.labels));
    }
    double mean = 0.0;
    for (const double a : accs) mean += a;
    mean /= static_cast<double>(accs.size());
    double var = 0.0;
    for (const double a : accs) var += (a - mean) * (a - mean);
    cell.acc_mean = mean;
    cell.acc_std = std::sqrt(var / static_cast<double>(accs.size()));
  });
}

void save_grid(const std::vector<GridCell>& cells,
               const std::filesystem::path& dir) {
  std::ofstream out(dir / "grid.csv", std::ios::binary);
  if (!out) throw IoError("cannot write grid.csv");
  out << "lambda,alpha,beta,mu,acc_mean,acc_std,support_size\n";
  char buf[200];
  for (const GridCell& c : cells) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                  c.lambda, c.alpha, c.beta, c.mu, c.acc_mean, c.acc_std,
                  c.support);
    out << buf;
  }
  if (!out) throw IoError("failed writing grid.csv");
}

const GridCell& best_cell(const std::vector<GridCell>& cells) {
  const GridCell* best = &cells.front();
  for (const GridCell& c : cells)
    if (c.acc_mean > best->acc_mean) best = &c;
  return *best;
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& err) {
    throw ConfigError(std::string("config is not valid JSON: ") + err.what());
  }
  // Accept a previously emitted metadata document transparently.
  if (root.is_object() && root.contains("command") && root.contains("config"))
    root = root["config"];
  return parse_config_object(root);
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

std::string resolved_config_text(const RunConfig& cfg) {
  return to_json(cfg).dump(2);
}

std::string config_hash(const RunConfig& cfg) {
  return fnv1a_hex(to_json(cfg).dump());
}

int run_command(Command cmd, const RunConfig& raw_cfg) {
  RunConfig cfg = raw_cfg;
  const std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);

  switch (cmd) {
    case Command::Synth: {
      if (!cfg.synthetic)
        throw ConfigError("synth requires a synthetic dataset spec");
      const Dataset ds = gen_synthetic(*cfg.synthetic);
      save_dataset(ds, (dir / "dataset.csv").string());
      write_metadata(cmd, cfg, dir / "metadata.json");
      log_info("synth: wrote " + (dir / "dataset.csv").string());
      return 0;
    }
    case Command::Select: {
      const LoadedData data = load_input(cfg);
      cfg.blufs.clusters = resolve_clusters(cfg, data.ds);
      SolverState state;
      const FeatureRanking ranking = make_producer(cfg, &state)(data.ds);
      save_ranking(ranking, data.ds, (dir / "ranking.csv").string());
      if (cfg.method == "blufs")
        save_trace(state, (dir / "trace.csv").string());
      write_metadata(cmd, cfg, dir / "metadata.json");
      return 0;
    }
    case Command::Trace: {
      const LoadedData data = load_input(cfg);
      cfg.blufs.clusters = resolve_clusters(cfg, data.ds);
      if (cfg.method != "blufs")
        throw ConfigError("trace requires method 'blufs'");
      SolverState state;
      (void)make_producer(cfg, &state)(data.ds);
      save_trace(state, (dir / "trace.csv").string());
      write_metadata(cmd, cfg, dir / "metadata.json");
      return 0;
    }
    case Command::EvalCluster: {
      const LoadedData data = load_input(cfg);
      cfg.blufs.clusters = resolve_clusters(cfg, data.ds);
      const EvalReport report =
          protocol_cluster(data.ds, make_producer(cfg, nullptr),
                           cfg.eval.feature_counts, cfg.eval.seeds,
                           resolve_workers(cfg));
      save_report_csv(report, (dir / "report_cluster.csv").string());
      save_report_json(report, data.name, config_hash(cfg),
                       (dir / "report_cluster.json").string());
      write_metadata(cmd, cfg, dir / "metadata.json");
      return 0;
    }
    case Command::EvalClassify: {
      const LoadedData data = load_input(cfg);
      cfg.blufs.clusters = resolve_clusters(cfg, data.ds);
      const EvalReport report = protocol_classify(
          data.ds, make_producer(cfg, nullptr), cfg.eval.feature_counts,
          cfg.eval.classify_repeats, cfg.blufs.seed, cfg.eval.split_fraction,
          cfg.eval.knn_k, resolve_workers(cfg));
      save_report_csv(report, (dir / "report_classify.csv").string());
      save_report_json(report, data.name, config_hash(cfg),
                       (dir / "report_classify.json").string());
      write_metadata(cmd, cfg, dir / "metadata.json");
      return 0;
    }
    case Command::Grid: {
      const LoadedData data = load_input(cfg);
      if (!data.ds.labels)
        throw ConfigError("grid requires a labeled dataset (ACC objective)");
      const int clusters = resolve_clusters(cfg, data.ds);
      BlufsConfig probe = cfg.blufs;
      probe.clusters = clusters;
      const GraphBundle bundle = build_graph(data.ds, probe);
      const std::vector<double> values = grid_values();

      std::vector<GridCell> cells;
      if (cfg.coarse) {
        // Two-stage sweep: fix mu = lambda = 1 while scanning (alpha, beta),
        // then fix the winning pair and scan (mu, lambda).
        for (const double a : values)
          for (const double b : values)
            cells.push_back({1.0, a, b, 1.0});
        run_grid_cells(cfg, data.ds, bundle, clusters, cells);
        const GridCell stage1 = best_cell(cells);
        std::vector<GridCell> stage2;
        for (const double m : values)
          for (const double l : values)
            stage2.push_back({l, stage1.alpha, stage1.beta, m});
        run_grid_cells(cfg, data.ds, bundle, clusters, stage2);
        cells.insert(cells.end(), stage2.begin(), stage2.end());
      } else {
        for (const double l : values)
          for (const double a : values)
            for (const double b : values)
              for (const double m : values)
                cells.push_back({l, a, b, m});
        run_grid_cells(cfg, data.ds, bundle, clusters, cells);
      }

      save_grid(cells, dir);
      const GridCell best = best_cell(cells);
      json best_doc = {{"lambda", best.lambda},   {"alpha", best.alpha},
                       {"beta", best.beta},       {"mu", best.mu},
                       {"acc_mean", best.acc_mean}, {"acc_std", best.acc_std},
                       {"support_size", best.support}};
      std::ofstream out(dir / "grid_best.json", std::ios::binary);
      if (!out) throw IoError("cannot write grid_best.json");
      out << best_doc.dump(2) << '\n';
      write_metadata(cmd, cfg, dir / "metadata.json");
      return 0;
    }
  }
  throw ConfigError("unhandled command");
}

}  // namespace blufs
