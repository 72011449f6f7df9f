#include "qti/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace qti {

namespace {

// Orthogonalises the columns of w in place, accumulating the rotations in v
// (w_in * v == w_out).
void hestenes(CxMat &w, CxMat &v, double tol, int max_sweeps) {
  Index const n = w.cols();
  v = CxMat::Identity(n, n);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (Index p = 0; p + 1 < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        double const alpha = w.col(p).squaredNorm();
        double const beta = w.col(q).squaredNorm();
        Cx const gamma = w.col(p).dot(w.col(q));
        double const g = std::abs(gamma);
        if (g == 0.0 || g <= tol * std::sqrt(alpha * beta)) { continue; }
        rotated = true;
        double const zeta = (beta - alpha) / (2.0 * g);
        double const t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        double const c = 1.0 / std::sqrt(1.0 + t * t);
        double const s = c * t;
        Cx const phase = std::conj(gamma) / g; // e^{-i theta}
        for (Index i = 0; i < w.rows(); ++i) {
          Cx const wp = w(i, p), wq = w(i, q) * phase;
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
        for (Index i = 0; i < n; ++i) {
          Cx const vp = v(i, p), vq = v(i, q) * phase;
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) { return; }
  }
}

} // namespace

SvdResult jacobi_svd(const CxMat &a, double tol, int max_sweeps) {
  bool const wide = a.cols() > a.rows();
  CxMat w = wide ? CxMat(a.adjoint()) : a;
  CxMat v;
  hestenes(w, v, tol, max_sweeps);
  Index const n = w.cols();

  std::vector<double> norms(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) { norms[static_cast<std::size_t>(j)] = w.col(j).norm(); }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) {
    return norms[static_cast<std::size_t>(x)] > norms[static_cast<std::size_t>(y)];
  });

  SvdResult r;
  r.s.resize(n);
  CxMat left(w.rows(), n), right(n, n);
  for (Index k = 0; k < n; ++k) {
    Index const j = order[static_cast<std::size_t>(k)];
    double const sj = norms[static_cast<std::size_t>(j)];
    r.s[k] = sj;
    if (sj > 0.0) {
      left.col(k) = w.col(j) / sj;
    } else {
      left.col(k).setZero();
    }
    right.col(k) = v.col(j);
  }
  if (wide) {
    r.u = std::move(right);
    r.v = std::move(left);
  } else {
    r.u = std::move(left);
    r.v = std::move(right);
  }
  return r;
}

CxMat svd_soft_threshold(const CxMat &a, double tau) {
  if (tau < 0.0) { throw InvalidArgument("svd_soft_threshold: negative threshold"); }
  if (tau == 0.0 || a.size() == 0) { return a; }
  SvdResult const d = jacobi_svd(a);
  RealVec shrunk = (d.s.array() - tau).max(0.0).matrix();
  return d.u * shrunk.asDiagonal() * d.v.adjoint();
}

} // namespace qti
