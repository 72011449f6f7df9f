#include <cmath>

#include "helpers.hpp"
#include "qti/design.hpp"
#include "qti/epg.hpp"

using namespace qti;

namespace {

TissueParams blood(double v) { return {1740.0, 275.0, 1.0, v}; }

// Echoes of one cohort that first sees pulse `first`; orders are never truncated.
CxVec cohort_series(const SequenceDesign &d, const TissueParams &p, Index first, bool inverted) {
  Index const T = d.repetitions();
  EpgState s = EpgState::equilibrium(T);
  if (inverted) {
    s = apply_rf(s, 180.0, 0.0);
    s = apply_relaxation(s, d.inversion_gap_ms, p);
  }
  CxVec out = CxVec::Zero(T);
  for (Index n = first; n < T; ++n) {
    s = apply_rf(s, d.flip_angles_deg[static_cast<std::size_t>(n)], d.rf_phase_deg);
    s = apply_relaxation(s, d.te_ms, p);
    out[n] = s.f_plus[0];
    s = apply_relaxation(s, d.tr_ms - d.te_ms, p);
    s = apply_shift(s);
  }
  return out;
}

CxVec naive_flow(const SequenceDesign &d, const TissueParams &p) {
  Index const T = d.repetitions();
  double const step = p.velocity_mm_s * d.tr_ms * 1e-3;
  double const thick = d.slice_thickness_mm;
  CxVec out = CxVec::Zero(T);
  CxVec const s0 = cohort_series(d, p, 0, d.invert);
  for (Index n = 0; n < T; ++n) { out[n] += std::max(0.0, 1.0 - static_cast<double>(n) * step / thick) * s0[n]; }
  for (Index j = 1; j < T; ++j) {
    CxVec const sj = cohort_series(d, p, j, false);
    for (Index n = j; n < T; ++n) {
      double const w = std::max(0.0, std::min(step, thick - static_cast<double>(n - j) * step)) / thick;
      out[n] += w * sj[n];
    }
  }
  return out;
}

double signed_echo(Cx f) { return -f.imag(); }

} // namespace

TEST_CASE("stationary cohort weights") {
  RealMat const W = cohort_weights(default_design(), 0.0, 2.0);
  CHECK(W.rows() == 261);
  CHECK(W.cols() == 260);
  CHECK((W.row(0).array() == 1.0).all());
  CHECK(W.bottomRows(260).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("inverted cohort washes out after d / v") {
  RealMat const W = cohort_weights(default_design(), 2.0, 2.0);
  CHECK(W(0, 71) > 0.0);
  CHECK(W(0, 72) == 0.0);
  for (Index n = 72; n < W.cols(); ++n) { CHECK(W(0, n) == 0.0); }
}

TEST_CASE("cohort weights conserve mass") {
  SequenceDesign const d = default_design();
  for (double v : {0.0, 0.3, 2.0, 5.0, 13.7, 20.0, 80.0, 400.0}) {
    for (double thick : {1.0, 2.0, 5.0}) {
      RealMat const W = cohort_weights(d, v, thick);
      CAPTURE(v);
      CAPTURE(thick);
      CHECK((W.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
      CHECK(W.minCoeff() >= 0.0);
      CHECK(W.maxCoeff() <= 1.0);
      bool causal = true;
      for (Index j = 1; j < W.rows(); ++j) {
        for (Index n = 0; n < j && n < W.cols(); ++n) { causal = causal && W(j, n) == 0.0; }
      }
      CHECK(causal);
    }
  }
}

TEST_CASE("cohort weight arguments are checked") {
  CHECK_THROWS_AS(cohort_weights(default_design(), -1.0, 2.0), InvalidArgument);
  CHECK_THROWS_AS(cohort_weights(default_design(), 1.0, 0.0), InvalidArgument);
}

TEST_CASE("zero velocity reduces to the stationary signal") {
  SequenceDesign const d = default_design();
  for (const TissueParams &p : {blood(0.0), TissueParams{900.0, 60.0, 1.0, 0.0}}) {
    CHECK((simulate_with_flow(d, p) - simulate_transient(d, p)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("flow signal matches a per-cohort loop") {
  SequenceDesign const d = default_design();
  for (double v : {0.5, 5.0, 20.0, 80.0, 300.0}) {
    CAPTURE(v);
    CHECK((simulate_with_flow(d, blood(v)) - naive_flow(d, blood(v))).cwiseAbs().maxCoeff() < 1e-10);
  }
  SequenceDesign plain = d;
  plain.invert = false;
  CHECK((simulate_with_flow(plain, blood(10.0)) - naive_flow(plain, blood(10.0))).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("inflow raises the signed echo and the total signal") {
  SequenceDesign const d = default_design();
  CxVec const still = simulate_transient(d, blood(0.0));
  for (double v : {5.0, 10.0, 20.0, 40.0, 80.0}) {
    CxVec const moving = simulate_with_flow(d, blood(v));
    CAPTURE(v);
    double worst = 0.0;
    for (Index n = 0; n < d.repetitions(); ++n) {
      worst = std::min(worst, signed_echo(moving[n]) - signed_echo(still[n]));
    }
    CHECK(worst >= -1e-12);
    CHECK(moving.cwiseAbs().sum() > still.cwiseAbs().sum());
  }
}

TEST_CASE("flowing magnitude never drops below stationary" * doctest::test_suite("magnitude")) {
  SequenceDesign const d = default_design();
  CxVec const still = simulate_transient(d, blood(0.0));
  for (double v : {5.0, 20.0, 80.0}) {
    CxVec const moving = simulate_with_flow(d, blood(v));
    Index violations = 0;
    for (Index n = 0; n < d.repetitions(); ++n) { violations += std::abs(moving[n]) < std::abs(still[n]) ? 1 : 0; }
    CAPTURE(v);
    CHECK(violations == 0);
  }
}
