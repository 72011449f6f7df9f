#pragma once

#include "qti/types.hpp"

namespace qti {

// Thin SVD a = u * diag(s) * v^H with s sorted descending.
struct SvdResult {
  CxMat u;
  RealVec s;
  CxMat v;
};

// One-sided (Hestenes) Jacobi. Accurate to working precision on the small
// Casorati matrices used by the low-rank prox.
SvdResult jacobi_svd(const CxMat &a, double tol = 1e-15, int max_sweeps = 80);

// Singular-value soft thresholding: sum_i max(s_i - tau, 0) u_i v_i^H.
CxMat svd_soft_threshold(const CxMat &a, double tau);

} // namespace qti
