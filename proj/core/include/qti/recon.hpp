#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "qti/fft.hpp"
#include "qti/grid.hpp"
#include "qti/phantom.hpp"

namespace qti {

struct SignalEnsemble {
  CxMat d; // N_atoms x T, one simulated series per row
  std::vector<TissueParams> params;
  bool normalized = false;

  Index atoms() const { return d.rows(); }
  Index frames() const { return d.cols(); }
};

// Stationary cells of the grid plus SB-relaxation atoms flowing at each of the
// given velocities.
std::vector<TissueParams> ensemble_points(const InferenceGrid &grid, const std::vector<double> &flow_velocities_mm_s);
std::vector<TissueParams> default_ensemble_points();

SignalEnsemble build_ensemble(const SequenceDesign &design, const std::vector<TissueParams> &points,
                              bool normalize_rows = true);

struct SubspaceBasis {
  CxMat phi; // T x R, orthonormal columns
  double energy_fraction = 0.0;

  Index rank() const { return phi.cols(); }
  Index frames() const { return phi.rows(); }
};

// Leading eigenvectors of sum_i d_i d_i^H over the atoms, so that phi * phi^H
// projects signal series (as column vectors) onto the subspace.
SubspaceBasis compute_basis(const SignalEnsemble &ensemble, Index rank);

// max_i ||d_i - phi phi^H d_i|| / ||d_i||
double max_projection_error(const SignalEnsemble &ensemble, const SubspaceBasis &basis);

// E c: x_t = sum_r phi[t, r] c_r, y_tc = mask_t * FFT(S_c x_t).
class EncodingOperator {
public:
  EncodingOperator(CxMat phi, Cx3 sensitivities, U8_3 masks);

  Index rank() const { return phi_.cols(); }
  Index frames() const { return phi_.rows(); }
  Index coils() const { return sens_.dimension(0); }
  Index height() const { return sens_.dimension(1); }
  Index width() const { return sens_.dimension(2); }

  Cx4 encode(const Cx3 &c) const;  // R x H x W -> T x C x H x W
  Cx3 adjoint(const Cx4 &y) const; // T x C x H x W -> R x H x W
  Cx3 normal(const Cx3 &c) const;  // E^H E c through the per-k R x R kernel

private:
  void check_coefficients(const Cx3 &c) const;

  CxMat phi_;
  Cx3 sens_;
  U8_3 masks_;
  std::vector<Cx> kernel_; // H*W blocks of R x R, row-major
  Fft2 fft_;
};

Cx4 apply_encode(const Cx3 &c, const SubspaceBasis &basis, const CoilSet &coils, const SamplingMask &masks);
Cx3 apply_adjoint(const Cx4 &y, const SubspaceBasis &basis, const CoilSet &coils, const SamplingMask &masks);

// Local low-rank prox: singular-value soft thresholding of every
// (patch*patch) x R Casorati matrix on a circular tiling shifted by
// (offset_y, offset_x); overlapping contributions are averaged.
Cx3 llr_prox(const Cx3 &c, double threshold, Index patch_size, Index stride, Index offset_y = 0, Index offset_x = 0);

// Sum of per-patch nuclear norms on the unshifted tiling.
double llr_norm(const Cx3 &c, Index patch_size, Index stride);

struct ReconConfig {
  Index rank = 10;
  double admm_rho = 1.0;
  double llr_lambda = 0.004;
  Index patch_size = 8;
  Index patch_stride = 8;
  Index n_admm_iters = 50;
  Index n_cg_iters = 10;
  std::uint64_t seed = 0;

  void validate(Index height, Index width) const;
};

struct AdmmIteration {
  Index iter = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double objective = 0.0;
};

struct AdmmResult {
  Cx3 c;
  std::vector<AdmmIteration> log;
};

AdmmResult admm_solve(const Cx4 &y, const SubspaceBasis &basis, const CoilSet &coils, const SamplingMask &masks,
                      const ReconConfig &config);

// Plain CG on E^H E c = E^H y from zero.
Cx3 cg_least_squares(const EncodingOperator &op, const Cx4 &y, Index iterations);

void write_residual_csv(std::ostream &out, const std::vector<AdmmIteration> &log);

Cx3 project_to_time(const Cx3 &c, const SubspaceBasis &basis);    // R x H x W -> T x H x W
Cx3 project_to_subspace(const Cx3 &x, const SubspaceBasis &basis); // T x H x W -> R x H x W

// ||a - b|| / ||b|| restricted to voxels where mask (H x W) is non-zero; an
// empty mask uses every voxel.
double nrmse(const Cx3 &estimate, const Cx3 &truth, const U8_2 &mask = U8_2());

} // namespace qti
