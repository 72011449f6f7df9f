#pragma once

#include <vector>

#include "qti/epg.hpp"

namespace qti {

RealVec log_spaced(double lo, double hi, Index n);

// Rectangular (T1, T2) grid; cells with T2 > T1 are masked out.
struct InferenceGrid {
  RealVec t1_ms;
  RealVec t2_ms;

  static InferenceGrid defaults(Index n_t1 = 60, Index n_t2 = 60);

  bool feasible(Index i, Index j) const { return t2_ms[j] <= t1_ms[i]; }
  // Feasible (i, j) pairs, row-major over (t1, t2).
  std::vector<std::pair<Index, Index>> cells() const;
  void validate() const;
};

} // namespace qti
