#include "qti/epg.hpp"

#include <cmath>
#include <numbers>

namespace qti {

namespace {

struct Spin {
  double x = 0.0, y = 0.0, z = 0.0;
};

// Rotation by alpha about the transverse axis (cos phi, sin phi, 0).
void rotate(std::vector<Spin> &spins, double alpha_deg, double phase_deg) {
  double const a = alpha_deg * std::numbers::pi / 180.0;
  double const p = phase_deg * std::numbers::pi / 180.0;
  double const ux = std::cos(p), uy = std::sin(p);
  double const c = std::cos(a), s = std::sin(a), t = 1.0 - c;
  double const r00 = c + ux * ux * t, r01 = ux * uy * t, r02 = uy * s;
  double const r10 = ux * uy * t, r11 = c + uy * uy * t, r12 = -ux * s;
  double const r20 = -uy * s, r21 = ux * s, r22 = c;
  for (auto &m : spins) {
    Spin const o = m;
    m.x = r00 * o.x + r01 * o.y + r02 * o.z;
    m.y = r10 * o.x + r11 * o.y + r12 * o.z;
    m.z = r20 * o.x + r21 * o.y + r22 * o.z;
  }
}

void relax(std::vector<Spin> &spins, double dt, const TissueParams &p) {
  double const e1 = std::exp(-dt / p.t1_ms), e2 = std::exp(-dt / p.t2_ms);
  for (auto &m : spins) {
    m.x *= e2;
    m.y *= e2;
    m.z = m.z * e1 + p.pd * (1.0 - e1);
  }
}

} // namespace

CxVec isochromat_signal(const SequenceDesign &design, const TissueParams &params, Index n_spins) {
  design.validate();
  params.validate();
  if (n_spins < 2) { throw InvalidArgument("isochromat_signal: need at least 2 spins"); }

  std::vector<Spin> spins(static_cast<std::size_t>(n_spins), Spin{0.0, 0.0, params.pd});
  std::vector<Cx> precession(spins.size());
  for (std::size_t j = 0; j < spins.size(); ++j) {
    precession[j] = std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n_spins));
  }

  if (design.invert) {
    rotate(spins, 180.0, 0.0);
    relax(spins, design.inversion_gap_ms, params);
  }

  Index const T = design.repetitions();
  CxVec signal(T);
  for (Index n = 0; n < T; ++n) {
    rotate(spins, design.flip_angles_deg[n], design.rf_phase_deg);
    relax(spins, design.te_ms, params);
    Cx acc{};
    for (auto const &m : spins) { acc += Cx{m.x, m.y}; }
    signal[n] = acc / static_cast<double>(n_spins);
    relax(spins, design.tr_ms - design.te_ms, params);
    for (std::size_t j = 0; j < spins.size(); ++j) {
      Cx const m = Cx{spins[j].x, spins[j].y} * precession[j];
      spins[j].x = m.real();
      spins[j].y = m.imag();
    }
  }
  return signal;
}

} // namespace qti
