#pragma once

#include <optional>
#include <string>
#include <vector>

#include "blufs/dataset.hpp"
#include "blufs/solver.hpp"

namespace blufs {

struct EvalConfig {
  std::vector<int> feature_counts;      // default {10,20,...,100}
  int repeats = 10;                     // clustering repeats
  std::vector<std::uint64_t> seeds;     // default seed..seed+repeats-1
  double split_fraction = 0.5;
  int knn_k = 1;
  int classify_repeats = 50;
};

struct RunConfig {
  std::optional<std::string> dataset_path;
  std::optional<SyntheticSpec> synthetic;
  std::string method = "blufs";  // blufs | lapscore
  bool standardize_features = true;
  BlufsConfig blufs;
  EvalConfig eval;
  std::string output_dir = "out";
  int workers = 0;  // 0 = hardware concurrency
  bool coarse = false;

  /// Short name used in report metadata (synthetic kind or file stem).
  std::string dataset_name() const;
};

enum class Command { Synth, Select, EvalCluster, EvalClassify, Grid, Trace };

Command command_from_string(const std::string& name);
const char* to_string(Command cmd);

/// Strict JSON config: unknown keys are rejected, defaults filled in.
/// Also accepts a previously emitted metadata document (the resolved
/// config is stored under its "config" key).
RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text);

/// Canonical JSON of the fully resolved config (what metadata stores).
std::string resolved_config_text(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

/// Executes one subcommand, writing artifacts plus metadata.json into
/// cfg.output_dir. Returns 0 on success; errors are thrown.
int run_command(Command cmd, const RunConfig& cfg);

}  // namespace blufs
