#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "qti/epg.hpp"

namespace qti {

struct TissueClass {
  std::string name;
  double mean_t1_ms = 0.0;
  double mean_t2_ms = 0.0;
  double sigma_t1_ms = 0.0;
  double sigma_t2_ms = 0.0;
  double weight = 0.0; // mixing weight of this class' contrast term
};

struct TissuePrior {
  std::vector<TissueClass> classes;

  // GM, WM, CSF and stationary blood with sigma = sigma_fraction * mean.
  static TissuePrior defaults(double sigma_fraction = 0.1);

  double total_weight() const;
  void validate() const;
};

std::vector<double> make_linear_ramp(double alpha_a_deg, double alpha_b_deg, Index repetitions);

// Timing shared by every candidate of a flip-angle search.
struct DesignTemplate {
  Index repetitions = 260;
  double tr_ms = 14.0;
  double te_ms = 2.0;
  bool invert = true;
  double inversion_gap_ms = 20.0;
  double slice_thickness_mm = 2.0;

  SequenceDesign with_ramp(double alpha_a_deg, double alpha_b_deg) const;
};

// Inverted 7 -> 70 degree ramp, 260 repetitions, TE/TR = 2/14 ms, 2 mm slice.
SequenceDesign default_design();

struct DesignCandidate {
  double alpha_a_deg = 0.0;
  double alpha_b_deg = 0.0;
};

// Complex T x 2 matrix of central finite differences (d/dT1, d/dT2) with
// relative step rel_step.
CxMat signal_jacobian(const SequenceDesign &design, const TissueParams &params, double rel_step = 1e-3);

Eigen::Matrix2d fisher_matrix(const CxMat &jacobian);

// log det of the Fisher matrix, clamped below at log(1e-300).
double log_det_fisher(const Eigen::Matrix2d &fisher);

// Parameter draws from the Gaussian class mixture (class picked uniformly,
// draws with T2 > T1 or non-positive values rejected). Deterministic in seed.
std::vector<TissueParams> sample_prior(const TissuePrior &prior, Index n_samples, std::uint64_t seed);

// Per-draw log det Fisher values at the prior samples.
std::vector<double> utility_samples(const SequenceDesign &design, const TissuePrior &prior, Index n_samples,
                                    std::uint64_t seed);

double expected_utility(const SequenceDesign &design, const TissuePrior &prior, Index n_samples, std::uint64_t seed);

// gamma_c = max_t min_{d != c} |f_t(mean_c) - f_t(mean_d)| using stationary
// class means with unit proton density.
std::vector<double> class_contrast(const SequenceDesign &design, const TissuePrior &prior);

struct RawTerms {
  double utility = 0.0;
  std::vector<double> contrast;
};

struct Normalizers {
  double utility_min = 0.0;
  double utility_max = 0.0;
  std::vector<double> contrast_min;
  std::vector<double> contrast_max;

  static Normalizers from_terms(const std::vector<RawTerms> &terms);
};

struct CostBreakdown {
  double utility_raw = 0.0;
  double utility_norm = 0.0;
  std::vector<double> contrast_raw;
  std::vector<double> contrast_norm;
  double total_cost = 0.0;
};

RawTerms raw_terms(const SequenceDesign &design, const TissuePrior &prior, Index n_samples, std::uint64_t seed);

// Min-max normalization of each term followed by the weighted combination
// total = -[(1 - sum mu) * U_hat + sum_c mu_c * gamma_hat_c].
CostBreakdown combine_terms(const RawTerms &raw, const Normalizers &norm, const TissuePrior &prior);

CostBreakdown cost(const SequenceDesign &design, const TissuePrior &prior, Index n_samples, std::uint64_t seed,
                   const Normalizers &norm);

struct AngleRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct LandscapeCell {
  DesignCandidate candidate;
  CostBreakdown cost;
};

struct GridSearchResult {
  std::vector<std::string> class_names;
  std::vector<LandscapeCell> cells; // row-major: alpha_a outer, alpha_b inner
  std::vector<Index> ranking;       // cell indices by increasing total cost
  Index best = 0;

  const LandscapeCell &best_cell() const { return cells[static_cast<std::size_t>(best)]; }
};

struct GridSearchOptions {
  DesignTemplate timing;
  Index n_samples = 64;
};

GridSearchResult grid_search(const TissuePrior &prior, AngleRange alpha_a, AngleRange alpha_b, double step_deg,
                             std::uint64_t seed, const GridSearchOptions &options = {});

// CSV with header alpha_a_deg,alpha_b_deg,utility_raw,utility_norm,
// contrast_<class>...,total_cost. Contrast columns hold raw values.
void write_landscape_csv(std::ostream &out, const GridSearchResult &result);

} // namespace qti
