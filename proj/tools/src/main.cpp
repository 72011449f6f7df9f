#include <CLI11.hpp>
#include <iostream>

#include "config.hpp"
#include "manifest.hpp"
#include "qti/parallel.hpp"
#include "stages.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitMissing = 2;
constexpr int kExitFailure = 3;

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"qti: transient-state relaxometry experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  int threads = 0;
  std::vector<std::pair<std::string, CLI::App *>> commands;
  std::vector<CLI::Option *> seed_opts;

  std::map<std::string, std::string> help{
    {"design", "flip-angle grid search; writes landscape.csv and best_design.json"},
    {"simulate", "phantom, coils, masks and noisy k-space"},
    {"reconstruct", "subspace ADMM reconstruction of the simulated k-space"},
    {"infer", "voxel-wise T1/T2/PD maps from the reconstruction"},
    {"angio", "angiographic frame sum, MIP and contrast frames"},
    {"metrics", "per-class accuracy, CCC and efficiency tables"},
    {"pipeline", "simulate, reconstruct, infer, angio and metrics in order"},
  };
  for (const auto &name : qti::cli::stage_names()) {
    CLI::App *sub = app.add_subcommand(name, help[name]);
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    seed_opts.push_back(sub->add_option("--seed", seed, "override the config seed"));
    sub->add_option("--threads", threads, "worker threads (0 = hardware)")->check(CLI::NonNegativeNumber);
    commands.emplace_back(name, sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int const code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    qti::set_thread_count(threads);
    qti::cli::ExperimentConfig config = qti::cli::load_config(config_path);
    for (auto *opt : seed_opts) {
      if (opt->count() > 0) {
        config.seed = seed;
        config.raw["seed"] = seed;
      }
    }
    for (const auto &[name, sub] : commands) {
      if (sub->parsed()) { qti::cli::run_stage(name, config, out_dir); }
    }
  } catch (const qti::cli::ConfigError &e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const qti::cli::MissingArtifact &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMissing;
  } catch (const qti::InvalidArgument &e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}
