#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "config.hpp"

namespace qti::cli {

// Stage outputs go to out/<stage>/ next to a manifest.csv.
void cmd_design(const ExperimentConfig &config, const std::filesystem::path &out);
void cmd_simulate(const ExperimentConfig &config, const std::filesystem::path &out);
void cmd_reconstruct(const ExperimentConfig &config, const std::filesystem::path &out);
void cmd_infer(const ExperimentConfig &config, const std::filesystem::path &out);
void cmd_angio(const ExperimentConfig &config, const std::filesystem::path &out);
void cmd_metrics(const ExperimentConfig &config, const std::filesystem::path &out);

// simulate, reconstruct, infer, angio, metrics in order.
void cmd_pipeline(const ExperimentConfig &config, const std::filesystem::path &out);

const std::vector<std::string> &stage_names();
void run_stage(const std::string &name, const ExperimentConfig &config, const std::filesystem::path &out);

} // namespace qti::cli
