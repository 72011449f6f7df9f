#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "qti/grid.hpp"

namespace qti {

struct PosteriorSummary {
  double mle_t1_ms = 0.0;
  double mle_t2_ms = 0.0;
  double mean_t1_ms = 0.0;
  double mean_t2_ms = 0.0;
  double std_t1_ms = 0.0;
  double std_t2_ms = 0.0;
  Cx pd_estimate{};
  double max_loglike = -std::numeric_limits<double>::infinity();
  double log_evidence = std::numeric_limits<double>::quiet_NaN(); // grid only
  Index n_samples = 0;
};

struct ProfileLikelihood {
  double loglike = -std::numeric_limits<double>::infinity();
  Cx pd_hat{};
};

// Gaussian log-likelihood of x given model series f with the complex scale
// profiled out, dropping the additive constant.
ProfileLikelihood profile_loglike(const CxVec &x, const CxVec &f, double sigma);
ProfileLikelihood profile_loglike(const CxVec &x, const SequenceDesign &design, const TissueParams &theta, double sigma);

struct Dictionary {
  CxMat atoms; // unit-norm rows
  std::vector<TissueParams> params;
  RealVec norms; // norms of the unnormalised simulated rows

  Index size() const { return atoms.rows(); }
};

Dictionary make_dictionary(const SequenceDesign &design, const std::vector<TissueParams> &points);
// One stationary atom per feasible cell, in InferenceGrid::cells() order.
Dictionary make_dictionary(const SequenceDesign &design, const InferenceGrid &grid);

struct DictionaryMatch {
  Index index = -1;
  TissueParams theta;
  Cx pd_hat{};        // <d, x> for the winning unit atom
  double correlation = 0.0; // |<d, x>|
};

DictionaryMatch dictionary_match(const CxVec &x, const Dictionary &dict);

struct GridPosterior {
  InferenceGrid grid;
  RealMat probability;  // n_t1 x n_t2, zero on infeasible cells, sums to 1
  RealMat loglike;      // -inf on infeasible cells
  PosteriorSummary summary;
  Index argmax_i = -1;
  Index argmax_j = -1;
};

// Grid evaluation reusing a dictionary built from the same grid.
class GridModel {
public:
  GridModel(const SequenceDesign &design, InferenceGrid grid);

  const InferenceGrid &grid() const { return grid_; }
  const Dictionary &dictionary() const { return dict_; }
  GridPosterior posterior(const CxVec &x, double sigma) const;
  // Same as posterior() but with the atom inner products <d_k, x> supplied.
  GridPosterior posterior_from_projections(const CxVec &projections, double x_norm2, double sigma) const;

private:
  InferenceGrid grid_;
  std::vector<std::pair<Index, Index>> cells_;
  Dictionary dict_;
};

GridPosterior grid_posterior(const CxVec &x, const SequenceDesign &design, const InferenceGrid &grid, double sigma);

struct SupportBounds {
  double t1_min_ms = 100.0;
  double t1_max_ms = 5000.0;
  double t2_min_ms = 10.0;
  double t2_max_ms = 2500.0;
  bool constrain_t2_le_t1 = true;

  bool contains(double t1, double t2) const;
  void validate() const;
};

struct TmcmcOptions {
  Index n_particles = 500;
  double proposal_scale = 0.2;
  double target_cov = 1.0;
  Index mh_steps = 3;
  Index max_stages = 200;
};

struct TmcmcResult {
  RealMat samples; // n_particles x 2 (T1, T2)
  RealVec loglike;
  std::vector<double> betas; // strictly increasing, ends at 1
  double log_evidence = 0.0;
  PosteriorSummary summary;
};

using LogLikelihood = std::function<double(double t1_ms, double t2_ms)>;

TmcmcResult tmcmc(const LogLikelihood &loglike, const SupportBounds &support, const TmcmcOptions &options,
                  std::uint64_t seed);

// Profile likelihood of x under the stationary model.
TmcmcResult tmcmc_sample(const CxVec &x, const SequenceDesign &design, const SupportBounds &support, double sigma,
                         const TmcmcOptions &options, std::uint64_t seed);

enum class InferenceMethod { grid, tmcmc, dict };
InferenceMethod parse_inference_method(const std::string &name);
std::string to_string(InferenceMethod method);

struct InferenceOptions {
  InferenceMethod method = InferenceMethod::grid;
  double sigma = 0.0; // <= 0: estimate from the data
  TmcmcOptions tmcmc;
};

struct ParameterMaps {
  Re2 t1_ms;
  Re2 t2_ms;
  Cx2 pd;
  Re2 std_t1_ms;
  Re2 std_t2_ms;
  double sigma = 0.0;
};

// Noise level from the median absolute deviation of the real and imaginary
// residuals x - pd_hat * d after dictionary matching, over the masked voxels.
double estimate_sigma(const Cx3 &series, const Dictionary &dict, const U8_2 &mask);

// Voxel-wise inference inside mask (empty mask = every voxel); voxels outside
// stay zero.
ParameterMaps infer_maps(const Cx3 &series, const SequenceDesign &design, const InferenceGrid &grid,
                         const InferenceOptions &options, const U8_2 &mask, std::uint64_t seed);

} // namespace qti
