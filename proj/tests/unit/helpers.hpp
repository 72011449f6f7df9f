#pragma once

#include <random>

#include <doctest.h>

#include "qti/types.hpp"

namespace qti::test {

inline CxVec random_cx(Index n, std::mt19937_64 &rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  CxVec v(n);
  for (Index i = 0; i < n; ++i) {
    double const re = g(rng);
    v[i] = Cx(re, g(rng));
  }
  return v;
}

template <typename T>
inline void fill_random(T &t, std::mt19937_64 &rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (Index i = 0; i < t.size(); ++i) {
    double const re = g(rng);
    t.data()[i] = Cx(re, g(rng));
  }
}

template <typename T>
inline double max_abs_diff(const T &a, const T &b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (Index i = 0; i < a.size(); ++i) { m = std::max(m, std::abs(a.data()[i] - b.data()[i])); }
  return m;
}

template <typename T>
inline double norm_of(const T &a) {
  double s = 0.0;
  for (Index i = 0; i < a.size(); ++i) { s += std::norm(a.data()[i]); }
  return std::sqrt(s);
}

} // namespace qti::test
