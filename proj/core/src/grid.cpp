#include "qti/grid.hpp"

#include <cmath>

namespace qti {

RealVec log_spaced(double lo, double hi, Index n) {
  if (n < 1 || !(lo > 0.0) || !(hi >= lo)) { throw InvalidArgument("log_spaced: need n >= 1 and 0 < lo <= hi"); }
  RealVec v(n);
  if (n == 1) {
    v[0] = lo;
    return v;
  }
  double const a = std::log(lo), b = std::log(hi);
  for (Index i = 0; i < n; ++i) { v[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1)); }
  v[0] = lo;
  v[n - 1] = hi;
  return v;
}

InferenceGrid InferenceGrid::defaults(Index n_t1, Index n_t2) {
  return {log_spaced(100.0, 5000.0, n_t1), log_spaced(10.0, 2500.0, n_t2)};
}

std::vector<std::pair<Index, Index>> InferenceGrid::cells() const {
  std::vector<std::pair<Index, Index>> out;
  for (Index i = 0; i < t1_ms.size(); ++i) {
    for (Index j = 0; j < t2_ms.size(); ++j) {
      if (feasible(i, j)) { out.emplace_back(i, j); }
    }
  }
  return out;
}

void InferenceGrid::validate() const {
  auto check_axis = [](const RealVec &axis, const char *name) {
    if (axis.size() < 1) { throw InvalidArgument(std::string("InferenceGrid: empty ") + name + " axis"); }
    for (Index i = 0; i < axis.size(); ++i) {
      if (!(axis[i] > 0.0) || (i > 0 && !(axis[i] > axis[i - 1]))) {
        throw InvalidArgument(std::string("InferenceGrid: ") + name + " axis must be positive and strictly increasing");
      }
    }
  };
  check_axis(t1_ms, "t1");
  check_axis(t2_ms, "t2");
  if (cells().empty()) { throw InvalidArgument("InferenceGrid: no cell satisfies T2 <= T1"); }
}

} // namespace qti
