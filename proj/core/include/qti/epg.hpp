#pragma once

#include <vector>

#include "qti/types.hpp"

namespace qti {

struct TissueParams {
  double t1_ms = 1000.0;
  double t2_ms = 100.0;
  double pd = 1.0;
  double velocity_mm_s = 0.0;

  void validate() const;
};

struct SequenceDesign {
  std::vector<double> flip_angles_deg;
  double rf_phase_deg = 0.0;
  double tr_ms = 14.0;
  double te_ms = 2.0;
  bool invert = true;
  double inversion_gap_ms = 20.0;
  double slice_thickness_mm = 2.0;

  Index repetitions() const { return static_cast<Index>(flip_angles_deg.size()); }
  double duration_ms() const;
  void validate() const;
};

// Fourier configuration states of one spin population. f_minus[k] holds the
// conjugate of the negative-order transverse state, so f_minus[0] equals
// conj(f_plus[0]) and every RF rotation acts on (f_plus[k], f_minus[k], z[k]).
struct EpgState {
  CxVec f_plus;
  CxVec f_minus;
  CxVec z;

  explicit EpgState(Index k_max = 0);

  static EpgState equilibrium(Index k_max, double pd = 1.0);

  Index k_max() const { return z.size() - 1; }
  bool is_consistent(double tol = 1e-12) const;
};

EpgState apply_rf(EpgState state, double alpha_deg, double phase_deg);
EpgState apply_relaxation(EpgState state, double dt_ms, const TissueParams &params);
EpgState apply_shift(EpgState state);

void rotate_in_place(EpgState &state, double alpha_deg, double phase_deg);
void relax_in_place(EpgState &state, double dt_ms, const TissueParams &params);
void shift_in_place(EpgState &state);

// Echo signal f_n = F0 at TE of every repetition. Per repetition:
// RF -> relax(TE) -> sample -> relax(TR - TE) -> dephase. An inverted design
// first applies a 180 degree pulse and relaxes for the inversion gap.
CxVec simulate_transient(const SequenceDesign &design, const TissueParams &params,
                         const EpgState &initial);

// Starts from thermal equilibrium with k_max = max(T, k_max_override).
CxVec simulate_transient(const SequenceDesign &design, const TissueParams &params,
                         Index k_max_override = 0);

// Plug-flow washout weights W[(T+1) x T]. Row 0 is the cohort present at
// inversion; row j >= 1 is the fresh cohort entering before pulse j.
RealMat cohort_weights(const SequenceDesign &design, double velocity_mm_s,
                       double slice_thickness_mm);

// Through-plane flow: sum of cohort signals weighted by cohort_weights.
// Fresh cohorts start at equilibrium and never see the inversion pulse.
CxVec simulate_with_flow(const SequenceDesign &design, const TissueParams &params);

// Ensemble average of n_spins isochromats with per-TR dephasing angles
// 2*pi*j/n_spins. Independent Bloch rotation path used to validate the EPG
// engine.
CxVec isochromat_signal(const SequenceDesign &design, const TissueParams &params,
                        Index n_spins);

} // namespace qti
