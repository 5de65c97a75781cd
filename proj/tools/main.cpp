#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "blufs/cli.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::string> out;
  std::optional<long long> seed;
  std::optional<int> workers;
  bool no_standardize = false;
  bool coarse = false;
};

void add_common(CLI::App* sub, CommonFlags& flags) {
  sub->add_option("--config", flags.config_path, "JSON config (or metadata) file")
      ->required();
  sub->add_option("--out", flags.out, "output directory override");
  sub->add_option("--seed", flags.seed, "seed override");
  sub->add_option("--workers", flags.workers, "worker pool size (0 = cores)");
  sub->add_flag("--no-standardize", flags.no_standardize,
                "skip per-feature z-scoring");
}

int run(blufs::Command cmd, const CommonFlags& flags) {
  blufs::RunConfig cfg = blufs::parse_config(flags.config_path);
  if (flags.out) cfg.output_dir = *flags.out;
  if (flags.seed) {
    cfg.blufs.seed = static_cast<std::uint64_t>(*flags.seed);
    if (cfg.synthetic) cfg.synthetic->seed = cfg.blufs.seed;
    cfg.eval.seeds.clear();
    for (int r = 0; r < cfg.eval.repeats; ++r)
      cfg.eval.seeds.push_back(cfg.blufs.seed + static_cast<std::uint64_t>(r));
  }
  if (flags.workers) cfg.workers = *flags.workers;
  if (flags.no_standardize) cfg.standardize_features = false;
  if (flags.coarse) cfg.coarse = true;
  return blufs::run_command(cmd, cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BLUFS: bi-level unsupervised feature selection"};
  app.require_subcommand(1);

  struct SubSpec {
    blufs::Command cmd;
    const char* name;
    const char* help;
  };
  const SubSpec subs[] = {
      {blufs::Command::Synth, "synth", "generate a synthetic CSV dataset"},
      {blufs::Command::Select, "select",
       "run feature selection, write ranking and solver trace"},
      {blufs::Command::EvalCluster, "eval-cluster",
       "k-means ACC/NMI over a grid of feature counts"},
      {blufs::Command::EvalClassify, "eval-classify",
       "k-NN classification over repeated random splits"},
      {blufs::Command::Grid, "grid",
       "hyperparameter sweep over the 8-point log grid"},
      {blufs::Command::Trace, "trace", "emit the solver convergence trace"},
  };

  CommonFlags flags[6];
  CLI::App* apps[6];
  for (int i = 0; i < 6; ++i) {
    apps[i] = app.add_subcommand(subs[i].name, subs[i].help);
    add_common(apps[i], flags[i]);
    if (subs[i].cmd == blufs::Command::Grid)
      apps[i]->add_flag("--coarse", flags[i].coarse,
                        "two-stage (alpha,beta) then (mu,lambda) sweep");
  }

  CLI11_PARSE(app, argc, argv);

  for (int i = 0; i < 6; ++i) {
    if (!apps[i]->parsed()) continue;
    try {
      return run(subs[i].cmd, flags[i]);
    } catch (const blufs::ConfigError& err) {
      std::fprintf(stderr, "error: %s\n", err.what());
      return 1;
    } catch (const std::invalid_argument& err) {
      std::fprintf(stderr, "error: %s\n", err.what());
      return 1;
    } catch (const blufs::IoError& err) {
      std::fprintf(stderr, "error: %s\n", err.what());
      return 2;
    } catch (const blufs::NumericalError& err) {
      std::fprintf(stderr, "error: %s\n", err.what());
      return 3;
    } catch (const std::exception& err) {
      std::fprintf(stderr, "error: %s\n", err.what());
      return 4;
    }
  }
  return 1;
}
