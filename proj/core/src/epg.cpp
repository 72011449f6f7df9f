#include "qti/epg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace qti {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

bool finite(double v) { return std::isfinite(v); }

// EPG rotation matrix for flip alpha about an axis at phase phi, acting on
// the column (F+_k, F-_k, Z_k).
struct Rotation {
  Cx m[3][3];

  Rotation(double alpha_deg, double phase_deg) {
    double const a = alpha_deg * kDegToRad;
    double const p = phase_deg * kDegToRad;
    double const c2 = std::cos(0.5 * a) * std::cos(0.5 * a);
    double const s2 = std::sin(0.5 * a) * std::sin(0.5 * a);
    double const sa = std::sin(a);
    double const ca = std::cos(a);
    Cx const e1 = std::polar(1.0, p);
    Cx const e2 = std::polar(1.0, 2.0 * p);
    Cx const i{0.0, 1.0};
    m[0][0] = c2;
    m[0][1] = e2 * s2;
    m[0][2] = -i * e1 * sa;
    m[1][0] = std::conj(e2) * s2;
    m[1][1] = c2;
    m[1][2] = i * std::conj(e1) * sa;
    m[2][0] = -0.5 * i * std::conj(e1) * sa;
    m[2][1] = 0.5 * i * e1 * sa;
    m[2][2] = ca;
  }
};

void check_rf(double alpha_deg, double phase_deg) {
  if (!finite(alpha_deg) || !finite(phase_deg)) {
    throw InvalidArgument("apply_rf: non-finite flip angle or phase");
  }
  if (alpha_deg < 0.0 || alpha_deg > 180.0) {
    throw InvalidArgument("apply_rf: flip angle outside [0, 180] degrees");
  }
}

Index highest_active(const EpgState &s) {
  for (Index k = s.k_max(); k > 0; --k) {
    if (s.f_plus[k] != Cx{} || s.f_minus[k] != Cx{} || s.z[k] != Cx{}) { return k; }
  }
  return 0;
}

bool in_real_subspace(const EpgState &s) {
  for (Index k = 0; k <= s.k_max(); ++k) {
    if (s.f_plus[k].real() != 0.0 || s.f_minus[k].real() != 0.0 || s.z[k].imag() != 0.0) {
      return false;
    }
  }
  return true;
}

// With constant zero RF phase a state that starts with purely imaginary
// transverse and purely real longitudinal orders stays there, so the
// recursion can run on three real arrays.
CxVec run_real(const SequenceDesign &design, const TissueParams &params, const EpgState &initial) {
  Index const T = design.repetitions();
  Index const K = initial.k_max();
  std::vector<double> a(K + 1), b(K + 1), z(K + 1);
  for (Index k = 0; k <= K; ++k) {
    a[k] = initial.f_plus[k].imag();
    b[k] = initial.f_minus[k].imag();
    z[k] = initial.z[k].real();
  }
  Index top = highest_active(initial);

  auto rotate = [&](double alpha_deg) {
    double const al = alpha_deg * kDegToRad;
    double const c2 = std::cos(0.5 * al) * std::cos(0.5 * al);
    double const s2 = std::sin(0.5 * al) * std::sin(0.5 * al);
    double const sa = std::sin(al);
    double const ca = std::cos(al);
    for (Index k = 0; k <= top; ++k) {
      double const ak = a[k], bk = b[k], zk = z[k];
      a[k] = c2 * ak + s2 * bk - sa * zk;
      b[k] = s2 * ak + c2 * bk + sa * zk;
      z[k] = 0.5 * sa * (ak - bk) + ca * zk;
    }
    b[0] = -a[0];
  };
  auto relax = [&](double dt) {
    double const e1 = std::exp(-dt / params.t1_ms);
    double const e2 = std::exp(-dt / params.t2_ms);
    for (Index k = 0; k <= top; ++k) {
      a[k] *= e2;
      b[k] *= e2;
      z[k] *= e1;
    }
    z[0] += params.pd * (1.0 - e1);
  };
  auto shift = [&]() {
    Index const new_top = std::min(top + 1, K);
    for (Index k = new_top; k >= 1; --k) { a[k] = a[k - 1]; }
    for (Index k = 0; k < new_top; ++k) { b[k] = b[k + 1]; }
    if (new_top == K) { b[K] = 0.0; }
    a[0] = -b[0];
    top = new_top;
  };

  if (design.invert) {
    rotate(180.0);
    relax(design.inversion_gap_ms);
  }

  double const e2_te = std::exp(-design.te_ms / params.t2_ms);
  CxVec signal(T);
  for (Index n = 0; n < T; ++n) {
    rotate(design.flip_angles_deg[n]);
    signal[n] = Cx{0.0, a[0] * e2_te};
    relax(design.tr_ms);
    shift();
  }
  return signal;
}

CxVec run_complex(const SequenceDesign &design, const TissueParams &params, const EpgState &initial) {
  Index const T = design.repetitions();
  EpgState s = initial;
  Index const K = s.k_max();
  Index top = highest_active(s);

  auto rotate = [&](double alpha_deg, double phase_deg) {
    Rotation const r(alpha_deg, phase_deg);
    for (Index k = 0; k <= top; ++k) {
      Cx const fp = s.f_plus[k], fm = s.f_minus[k], zk = s.z[k];
      s.f_plus[k] = r.m[0][0] * fp + r.m[0][1] * fm + r.m[0][2] * zk;
      s.f_minus[k] = r.m[1][0] * fp + r.m[1][1] * fm + r.m[1][2] * zk;
      s.z[k] = r.m[2][0] * fp + r.m[2][1] * fm + r.m[2][2] * zk;
    }
    s.f_minus[0] = std::conj(s.f_plus[0]);
  };
  auto relax = [&](double dt) {
    double const e1 = std::exp(-dt / params.t1_ms);
    double const e2 = std::exp(-dt / params.t2_ms);
    for (Index k = 0; k <= top; ++k) {
      s.f_plus[k] *= e2;
      s.f_minus[k] *= e2;
      s.z[k] *= e1;
    }
    s.z[0] += params.pd * (1.0 - e1);
  };
  auto shift = [&]() {
    Index const new_top = std::min(top + 1, K);
    for (Index k = new_top; k >= 1; --k) { s.f_plus[k] = s.f_plus[k - 1]; }
    for (Index k = 0; k < new_top; ++k) { s.f_minus[k] = s.f_minus[k + 1]; }
    if (new_top == K) { s.f_minus[K] = Cx{}; }
    s.f_plus[0] = std::conj(s.f_minus[0]);
    top = new_top;
  };

  if (design.invert) {
    rotate(180.0, 0.0);
    relax(design.inversion_gap_ms);
  }

  double const e2_te = std::exp(-design.te_ms / params.t2_ms);
  CxVec signal(T);
  for (Index n = 0; n < T; ++n) {
    rotate(design.flip_angles_deg[n], design.rf_phase_deg);
    signal[n] = s.f_plus[0] * e2_te;
    relax(design.tr_ms);
    shift();
  }
  return signal;
}

} // namespace

void TissueParams::validate() const {
  if (!finite(t1_ms) || !finite(t2_ms) || !finite(pd) || !finite(velocity_mm_s)) {
    throw InvalidArgument("TissueParams: non-finite value");
  }
  if (!(t2_ms > 0.0) || t1_ms < t2_ms) {
    throw InvalidArgument("TissueParams: require t1 >= t2 > 0 (t1=" + std::to_string(t1_ms) +
                          ", t2=" + std::to_string(t2_ms) + ")");
  }
  if (pd < 0.0) { throw InvalidArgument("TissueParams: negative proton density"); }
  if (velocity_mm_s < 0.0) { throw InvalidArgument("TissueParams: negative velocity"); }
}

double SequenceDesign::duration_ms() const {
  return (invert ? inversion_gap_ms : 0.0) + static_cast<double>(repetitions()) * tr_ms;
}

void SequenceDesign::validate() const {
  if (!finite(tr_ms) || !finite(te_ms) || !finite(rf_phase_deg) || !finite(inversion_gap_ms) ||
      !finite(slice_thickness_mm)) {
    throw InvalidArgument("SequenceDesign: non-finite timing");
  }
  if (te_ms < 0.0 || te_ms >= tr_ms) { throw InvalidArgument("SequenceDesign: require 0 <= TE < TR"); }
  if (inversion_gap_ms < 0.0) { throw InvalidArgument("SequenceDesign: negative inversion gap"); }
  if (!(slice_thickness_mm > 0.0)) { throw InvalidArgument("SequenceDesign: slice thickness must be > 0"); }
  for (double a : flip_angles_deg) {
    if (!finite(a) || a < 0.0 || a > 180.0) {
      throw InvalidArgument("SequenceDesign: flip angle outside [0, 180] degrees");
    }
  }
}

namespace {
Index order_count(Index k_max) {
  if (k_max < 0) { throw InvalidArgument("EpgState: negative k_max"); }
  return k_max + 1;
}
} // namespace

EpgState::EpgState(Index k_max)
  : f_plus(CxVec::Zero(order_count(k_max)))
  , f_minus(CxVec::Zero(k_max + 1))
  , z(CxVec::Zero(k_max + 1)) {}

EpgState EpgState::equilibrium(Index k_max, double pd) {
  EpgState s(k_max);
  s.z[0] = pd;
  return s;
}

bool EpgState::is_consistent(double tol) const {
  if (f_plus.size() != z.size() || f_minus.size() != z.size() || z.size() == 0) { return false; }
  return std::abs(f_minus[0] - std::conj(f_plus[0])) <= tol;
}

void rotate_in_place(EpgState &state, double alpha_deg, double phase_deg) {
  check_rf(alpha_deg, phase_deg);
  Rotation const r(alpha_deg, phase_deg);
  for (Index k = 0; k <= state.k_max(); ++k) {
    Cx const fp = state.f_plus[k], fm = state.f_minus[k], zk = state.z[k];
    state.f_plus[k] = r.m[0][0] * fp + r.m[0][1] * fm + r.m[0][2] * zk;
    state.f_minus[k] = r.m[1][0] * fp + r.m[1][1] * fm + r.m[1][2] * zk;
    state.z[k] = r.m[2][0] * fp + r.m[2][1] * fm + r.m[2][2] * zk;
  }
  state.f_minus[0] = std::conj(state.f_plus[0]);
}

void relax_in_place(EpgState &state, double dt_ms, const TissueParams &params) {
  if (!finite(dt_ms) || dt_ms < 0.0) { throw InvalidArgument("apply_relaxation: dt must be finite and >= 0"); }
  params.validate();
  double const e1 = std::exp(-dt_ms / params.t1_ms);
  double const e2 = std::exp(-dt_ms / params.t2_ms);
  state.f_plus *= e2;
  state.f_minus *= e2;
  state.z *= e1;
  state.z[0] += params.pd * (1.0 - e1);
}

void shift_in_place(EpgState &state) {
  Index const K = state.k_max();
  for (Index k = K; k >= 1; --k) { state.f_plus[k] = state.f_plus[k - 1]; }
  for (Index k = 0; k < K; ++k) { state.f_minus[k] = state.f_minus[k + 1]; }
  state.f_minus[K] = Cx{};
  state.f_plus[0] = std::conj(state.f_minus[0]);
}

EpgState apply_rf(EpgState state, double alpha_deg, double phase_deg) {
  rotate_in_place(state, alpha_deg, phase_deg);
  return state;
}

EpgState apply_relaxation(EpgState state, double dt_ms, const TissueParams &params) {
  relax_in_place(state, dt_ms, params);
  return state;
}

EpgState apply_shift(EpgState state) {
  shift_in_place(state);
  return state;
}

CxVec simulate_transient(const SequenceDesign &design, const TissueParams &params, const EpgState &initial) {
  design.validate();
  params.validate();
  if (!initial.is_consistent(1e-9)) { throw InvalidArgument("simulate_transient: inconsistent initial state"); }
  if (design.repetitions() == 0) { return CxVec(0); }
  if (design.rf_phase_deg == 0.0 && in_real_subspace(initial)) { return run_real(design, params, initial); }
  return run_complex(design, params, initial);
}

CxVec simulate_transient(const SequenceDesign &design, const TissueParams &params, Index k_max_override) {
  Index const k_max = std::max<Index>({design.repetitions(), k_max_override, 1});
  return simulate_transient(design, params, EpgState::equilibrium(k_max, params.pd));
}

} // namespace qti
