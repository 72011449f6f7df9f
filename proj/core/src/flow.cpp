#include "qti/epg.hpp"

#include <algorithm>
#include <cmath>

namespace qti {

RealMat cohort_weights(const SequenceDesign &design, double velocity_mm_s, double slice_thickness_mm) {
  if (!std::isfinite(velocity_mm_s) || velocity_mm_s < 0.0) {
    throw InvalidArgument("cohort_weights: velocity must be finite and >= 0");
  }
  if (!std::isfinite(slice_thickness_mm) || !(slice_thickness_mm > 0.0)) {
    throw InvalidArgument("cohort_weights: slice thickness must be > 0");
  }
  Index const T = design.repetitions();
  RealMat W = RealMat::Zero(T + 1, T);
  // Distance travelled per repetition, in slice units.
  double const step = velocity_mm_s * design.tr_ms * 1e-3 / slice_thickness_mm;
  for (Index n = 0; n < T; ++n) {
    W(0, n) = std::max(0.0, 1.0 - static_cast<double>(n) * step);
    for (Index j = 1; j <= n; ++j) {
      double const remaining = 1.0 - static_cast<double>(n - j) * step;
      W(j, n) = std::max(0.0, std::min(step, remaining));
    }
  }
  return W;
}

CxVec simulate_with_flow(const SequenceDesign &design, const TissueParams &params) {
  design.validate();
  params.validate();
  Index const T = design.repetitions();
  if (params.velocity_mm_s == 0.0) { return simulate_transient(design, params); }

  RealMat const W = cohort_weights(design, params.velocity_mm_s, design.slice_thickness_mm);
  CxVec signal = CxVec::Zero(T);

  // Each cohort is only simulated up to the last repetition where it still
  // carries weight; the recursion is causal so the truncated run is exact.
  auto last_nonzero = [&](Index row, Index first) {
    Index last = -1;
    for (Index n = first; n < T; ++n) {
      if (W(row, n) > 0.0) { last = n; }
    }
    return last;
  };

  {
    Index const last = last_nonzero(0, 0);
    if (last >= 0) {
      SequenceDesign head = design;
      head.flip_angles_deg.resize(static_cast<std::size_t>(last + 1));
      CxVec const s0 = simulate_transient(head, params, T);
      for (Index n = 0; n <= last; ++n) { signal[n] += W(0, n) * s0[n]; }
    }
  }

  for (Index j = 1; j < T; ++j) {
    Index const last = last_nonzero(j, j);
    if (last < 0) { continue; }
    SequenceDesign cohort = design;
    cohort.invert = false;
    cohort.flip_angles_deg.assign(design.flip_angles_deg.begin() + j, design.flip_angles_deg.begin() + last + 1);
    CxVec const sj = simulate_transient(cohort, params, T);
    for (Index n = j; n <= last; ++n) { signal[n] += W(j, n) * sj[n - j]; }
  }
  return signal;
}

} // namespace qti
