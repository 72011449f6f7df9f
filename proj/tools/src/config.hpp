#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qti/analysis.hpp"
#include "qti/design.hpp"
#include "qti/inference.hpp"
#include "qti/phantom.hpp"
#include "qti/recon.hpp"

namespace qti::cli {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DesignSection {
  DesignTemplate timing;
  double alpha_a_deg = 7.0;
  double alpha_b_deg = 70.0;
  AngleRange search_alpha_a{1.0, 15.0};
  AngleRange search_alpha_b{40.0, 90.0};
  double search_step_deg = 1.0;
  Index n_samples = 64;

  SequenceDesign sequence() const { return timing.with_ramp(alpha_a_deg, alpha_b_deg); }
};

struct AcquisitionSection {
  Index coils = 4;
  double acceleration = 8.0;
  double center_radius = 4.0;
  double snr = 30.0;
};

struct ReconSection {
  ReconConfig config;
  Index ensemble_n_t1 = 60;
  Index ensemble_n_t2 = 60;
  std::vector<double> ensemble_flow_mm_s{2.0, 5.0, 10.0, 20.0, 40.0, 80.0};
};

struct InferenceSection {
  InferenceMethod method = InferenceMethod::grid;
  Index n_t1 = 60;
  Index n_t2 = 60;
  double t1_min_ms = 100.0, t1_max_ms = 5000.0;
  double t2_min_ms = 10.0, t2_max_ms = 2500.0;
  double sigma = 0.0;
  Index n_particles = 500;

  InferenceGrid grid() const;
};

struct AnalysisSection {
  Index angio_last_frames = 160;
  bool has_angio_range = false;
  FrameRange angio_range;
  std::vector<double> extract_times_ms{350.0, 840.0};
  double t_acq_s = 0.0; // <= 0: sequence duration
};

struct ExperimentConfig {
  std::uint64_t seed = 1234;
  std::set<std::string> sections;
  DesignSection design;
  TissuePrior prior = TissuePrior::defaults();
  PhantomSpec phantom;
  AcquisitionSection acquisition;
  ReconSection recon;
  InferenceSection inference;
  AnalysisSection analysis;
  nlohmann::json raw;

  bool has(const std::string &section) const { return sections.count(section) != 0; }
  void require(std::initializer_list<const char *> needed, const std::string &command) const;
  // SHA-256 of the canonical JSON of the effective configuration.
  std::string hash() const;
};

ExperimentConfig parse_config(const nlohmann::json &doc);
ExperimentConfig load_config(const std::filesystem::path &path);

// Seeds of the individual random streams, all derived from the global seed.
enum class SeedStream : std::uint64_t { phantom = 1, coils, masks, noise, recon, inference };
std::uint64_t derived_seed(const ExperimentConfig &config, SeedStream stream);

} // namespace qti::cli
