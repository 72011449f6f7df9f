#include "qti/recon.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <string>

#include "qti/parallel.hpp"
#include "qti/random.hpp"
#include "qti/svd.hpp"

namespace qti {

namespace {

using RowCxMat = Eigen::Matrix<Cx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<RowCxMat> as_matrix(Cx3 &t) {
  return {t.data(), t.dimension(0), t.dimension(1) * t.dimension(2)};
}
Eigen::Map<const RowCxMat> as_matrix(const Cx3 &t) {
  return {t.data(), t.dimension(0), t.dimension(1) * t.dimension(2)};
}

Eigen::Map<CxVec> flat(Cx3 &t) { return {t.data(), t.size()}; }
Eigen::Map<const CxVec> flat(const Cx3 &t) { return {t.data(), t.size()}; }
Eigen::Map<const CxVec> flat(const Cx4 &t) { return {t.data(), t.size()}; }

bool all_finite(const Cx3 &t) {
  for (Index i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t.data()[i].real()) || !std::isfinite(t.data()[i].imag())) { return false; }
  }
  return true;
}

} // namespace

std::vector<TissueParams> ensemble_points(const InferenceGrid &grid, const std::vector<double> &flow_velocities_mm_s) {
  std::vector<TissueParams> points;
  for (auto [i, j] : grid.cells()) { points.push_back({grid.t1_ms[i], grid.t2_ms[j], 1.0, 0.0}); }
  for (double v : flow_velocities_mm_s) { points.push_back({1740.0, 275.0, 1.0, v}); }
  return points;
}

std::vector<TissueParams> default_ensemble_points() {
  return ensemble_points(InferenceGrid::defaults(), {2.0, 5.0, 10.0, 20.0, 40.0, 80.0});
}

SignalEnsemble build_ensemble(const SequenceDesign &design, const std::vector<TissueParams> &points,
                              bool normalize_rows) {
  if (points.empty()) { throw InvalidArgument("build_ensemble: empty parameter grid"); }
  design.validate();
  for (const auto &p : points) { p.validate(); }
  SignalEnsemble e;
  e.params = points;
  e.normalized = normalize_rows;
  e.d.resize(static_cast<Index>(points.size()), design.repetitions());
  parallel_for(static_cast<Index>(points.size()), [&](Index i) {
    CxVec f = simulate_with_flow(design, points[static_cast<std::size_t>(i)]);
    double const n = f.norm();
    if (!(n > 0.0)) { throw NumericalError("build_ensemble: atom " + std::to_string(i) + " is identically zero"); }
    if (normalize_rows) { f /= n; }
    e.d.row(i) = f.transpose();
  });
  return e;
}

SubspaceBasis compute_basis(const SignalEnsemble &ensemble, Index rank) {
  Index const T = ensemble.frames();
  if (rank < 1 || rank > T) { throw InvalidArgument("compute_basis: rank must be in [1, T]"); }
  if (ensemble.atoms() == 0) { throw InvalidArgument("compute_basis: empty ensemble"); }
  CxMat gram = ensemble.d.transpose() * ensemble.d.conjugate();
  gram = 0.5 * (gram + gram.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<CxMat> eig(gram);
  if (eig.info() != Eigen::Success) { throw NumericalError("compute_basis: eigen-decomposition failed"); }

  SubspaceBasis b;
  b.phi.resize(T, rank);
  double captured = 0.0;
  for (Index r = 0; r < rank; ++r) {
    Index const src = T - 1 - r; // eigenvalues ascend
    CxVec col = eig.eigenvectors().col(src);
    Index pivot = 0;
    col.cwiseAbs().maxCoeff(&pivot);
    col *= std::conj(col[pivot]) / std::abs(col[pivot]);
    b.phi.col(r) = col;
    captured += std::max(0.0, eig.eigenvalues()[src]);
  }
  double const total = gram.trace().real();
  b.energy_fraction = total > 0.0 ? captured / total : 0.0;
  return b;
}

double max_projection_error(const SignalEnsemble &ensemble, const SubspaceBasis &basis) {
  if (basis.frames() != ensemble.frames()) { throw InvalidArgument("max_projection_error: frame count mismatch"); }
  double worst = 0.0;
  for (Index i = 0; i < ensemble.atoms(); ++i) {
    CxVec const d = ensemble.d.row(i).transpose();
    CxVec const resid = d - basis.phi * (basis.phi.adjoint() * d);
    worst = std::max(worst, resid.norm() / d.norm());
  }
  return worst;
}

EncodingOperator::EncodingOperator(CxMat phi, Cx3 sensitivities, U8_3 masks)
  : phi_(std::move(phi))
  , sens_(std::move(sensitivities))
  , masks_(std::move(masks))
  , fft_(std::max<Index>(1, sens_.dimension(1)), std::max<Index>(1, sens_.dimension(2))) {
  Index const T = phi_.rows(), R = phi_.cols(), H = height(), W = width();
  if (R < 1 || T < 1) { throw InvalidArgument("EncodingOperator: empty basis"); }
  if (coils() < 1 || H < 1 || W < 1) { throw InvalidArgument("EncodingOperator: empty coil set"); }
  if (masks_.dimension(0) != T || masks_.dimension(1) != H || masks_.dimension(2) != W) {
    throw InvalidArgument("EncodingOperator: masks do not match basis frames or coil image size");
  }
  Index const N = H * W;
  kernel_.assign(static_cast<std::size_t>(N * R * R), Cx{});
  parallel_for(N, [&](Index k) {
    Cx *blk = kernel_.data() + k * R * R;
    for (Index t = 0; t < T; ++t) {
      if (!masks_.data()[t * N + k]) { continue; }
      for (Index a = 0; a < R; ++a) {
        Cx const ca = std::conj(phi_(t, a));
        for (Index b = 0; b < R; ++b) { blk[a * R + b] += ca * phi_(t, b); }
      }
    }
  });
}

void EncodingOperator::check_coefficients(const Cx3 &c) const {
  if (c.dimension(0) != rank() || c.dimension(1) != height() || c.dimension(2) != width()) {
    throw InvalidArgument("EncodingOperator: coefficient images must be R x H x W");
  }
}

Cx4 EncodingOperator::encode(const Cx3 &c) const {
  check_coefficients(c);
  Index const T = frames(), R = rank(), C = coils(), N = height() * width();
  Cx4 y(T, C, height(), width());
  parallel_for(C, [&](Index ci) {
    std::vector<Cx> z(static_cast<std::size_t>(R * N));
    Cx const *s = sens_.data() + ci * N;
    for (Index r = 0; r < R; ++r) {
      Cx *zr = z.data() + r * N;
      Cx const *cr = c.data() + r * N;
      for (Index k = 0; k < N; ++k) { zr[k] = s[k] * cr[k]; }
      fft_.forward(zr);
    }
    for (Index t = 0; t < T; ++t) {
      Cx *out = y.data() + (t * C + ci) * N;
      std::uint8_t const *m = masks_.data() + t * N;
      std::fill(out, out + N, Cx{});
      for (Index r = 0; r < R; ++r) {
        Cx const w = phi_(t, r);
        Cx const *zr = z.data() + r * N;
        for (Index k = 0; k < N; ++k) {
          if (m[k]) { out[k] += w * zr[k]; }
        }
      }
    }
  });
  return y;
}

Cx3 EncodingOperator::adjoint(const Cx4 &y) const {
  Index const T = frames(), R = rank(), C = coils(), H = height(), W = width(), N = H * W;
  if (y.dimension(0) != T || y.dimension(1) != C || y.dimension(2) != H || y.dimension(3) != W) {
    throw InvalidArgument("EncodingOperator: k-space must be T x C x H x W");
  }
  std::vector<Cx> per_coil(static_cast<std::size_t>(C * R * N));
  parallel_for(C, [&](Index ci) {
    Cx *acc = per_coil.data() + ci * R * N;
    for (Index t = 0; t < T; ++t) {
      Cx const *yt = y.data() + (t * C + ci) * N;
      std::uint8_t const *m = masks_.data() + t * N;
      for (Index r = 0; r < R; ++r) {
        Cx const w = std::conj(phi_(t, r));
        Cx *ar = acc + r * N;
        for (Index k = 0; k < N; ++k) {
          if (m[k]) { ar[k] += w * yt[k]; }
        }
      }
    }
    Cx const *s = sens_.data() + ci * N;
    for (Index r = 0; r < R; ++r) {
      Cx *ar = acc + r * N;
      fft_.inverse(ar);
      for (Index k = 0; k < N; ++k) { ar[k] *= std::conj(s[k]); }
    }
  });
  Cx3 c(R, H, W);
  c.setZero();
  for (Index ci = 0; ci < C; ++ci) {
    Cx const *acc = per_coil.data() + ci * R * N;
    for (Index i = 0; i < R * N; ++i) { c.data()[i] += acc[i]; }
  }
  return c;
}

Cx3 EncodingOperator::normal(const Cx3 &c) const {
  check_coefficients(c);
  Index const R = rank(), C = coils(), H = height(), W = width(), N = H * W;
  std::vector<Cx> per_coil(static_cast<std::size_t>(C * R * N));
  parallel_for(C, [&](Index ci) {
    std::vector<Cx> z(static_cast<std::size_t>(R * N));
    Cx const *s = sens_.data() + ci * N;
    for (Index r = 0; r < R; ++r) {
      Cx *zr = z.data() + r * N;
      Cx const *cr = c.data() + r * N;
      for (Index k = 0; k < N; ++k) { zr[k] = s[k] * cr[k]; }
      fft_.forward(zr);
    }
    Cx *acc = per_coil.data() + ci * R * N;
    for (Index k = 0; k < N; ++k) {
      Cx const *blk = kernel_.data() + k * R * R;
      for (Index a = 0; a < R; ++a) {
        Cx sum{};
        for (Index b = 0; b < R; ++b) { sum += blk[a * R + b] * z[static_cast<std::size_t>(b * N + k)]; }
        acc[a * N + k] = sum;
      }
    }
    for (Index r = 0; r < R; ++r) {
      Cx *ar = acc + r * N;
      fft_.inverse(ar);
      for (Index k = 0; k < N; ++k) { ar[k] *= std::conj(s[k]); }
    }
  });
  Cx3 out(R, H, W);
  out.setZero();
  for (Index ci = 0; ci < C; ++ci) {
    Cx const *acc = per_coil.data() + ci * R * N;
    for (Index i = 0; i < R * N; ++i) { out.data()[i] += acc[i]; }
  }
  return out;
}

Cx4 apply_encode(const Cx3 &c, const SubspaceBasis &basis, const CoilSet &coils, const SamplingMask &masks) {
  return EncodingOperator(basis.phi, coils.sensitivities, masks.mask).encode(c);
}

Cx3 apply_adjoint(const Cx4 &y, const SubspaceBasis &basis, const CoilSet &coils, const SamplingMask &masks) {
  return EncodingOperator(basis.phi, coils.sensitivities, masks.mask).adjoint(y);
}

namespace {

struct Tiling {
  Index patch, stride, H, W, oy, ox;
  Index ny() const { return (H + stride - 1) / stride; }
  Index nx() const { return (W + stride - 1) / stride; }
  Index count() const { return ny() * nx(); }
  // Linear voxel index of pixel p (0 .. patch^2 - 1) of patch q.
  Index voxel(Index q, Index p) const {
    Index const py = q / nx(), px = q % nx();
    Index const y = (oy + py * stride + p / patch) % H;
    Index const x = (ox + px * stride + p % patch) % W;
    return y * W + x;
  }
};

Tiling make_tiling(const Cx3 &c, Index patch_size, Index stride, Index offset_y, Index offset_x) {
  Index const H = c.dimension(1), W = c.dimension(2);
  if (patch_size < 1 || patch_size > H || patch_size > W) {
    throw InvalidArgument("llr: patch size must be in [1, min(H, W)]");
  }
  if (stride < 1 || stride > patch_size) { throw InvalidArgument("llr: stride must be in [1, patch size]"); }
  auto wrap = [](Index v, Index n) { return ((v % n) + n) % n; };
  return {patch_size, stride, H, W, wrap(offset_y, H), wrap(offset_x, W)};
}

CxMat gather(const Cx3 &c, const Tiling &tl, Index q) {
  Index const R = c.dimension(0), N = tl.H * tl.W, P2 = tl.patch * tl.patch;
  CxMat m(P2, R);
  for (Index p = 0; p < P2; ++p) {
    Index const v = tl.voxel(q, p);
    for (Index r = 0; r < R; ++r) { m(p, r) = c.data()[r * N + v]; }
  }
  return m;
}

} // namespace

Cx3 llr_prox(const Cx3 &c, double threshold, Index patch_size, Index stride, Index offset_y, Index offset_x) {
  if (threshold < 0.0) { throw InvalidArgument("llr_prox: negative threshold"); }
  Tiling const tl = make_tiling(c, patch_size, stride, offset_y, offset_x);
  Index const R = c.dimension(0), N = tl.H * tl.W, P2 = tl.patch * tl.patch, Q = tl.count();

  std::vector<CxMat> shrunk(static_cast<std::size_t>(Q));
  parallel_for(Q, [&](Index q) { shrunk[static_cast<std::size_t>(q)] = svd_soft_threshold(gather(c, tl, q), threshold); });

  Cx3 out(c.dimension(0), tl.H, tl.W);
  out.setZero();
  std::vector<double> hits(static_cast<std::size_t>(N), 0.0);
  for (Index q = 0; q < Q; ++q) {
    CxMat const &m = shrunk[static_cast<std::size_t>(q)];
    for (Index p = 0; p < P2; ++p) {
      Index const v = tl.voxel(q, p);
      hits[static_cast<std::size_t>(v)] += 1.0;
      for (Index r = 0; r < R; ++r) { out.data()[r * N + v] += m(p, r); }
    }
  }
  for (Index r = 0; r < R; ++r) {
    for (Index v = 0; v < N; ++v) { out.data()[r * N + v] /= hits[static_cast<std::size_t>(v)]; }
  }
  return out;
}

double llr_norm(const Cx3 &c, Index patch_size, Index stride) {
  Tiling const tl = make_tiling(c, patch_size, stride, 0, 0);
  Index const Q = tl.count();
  std::vector<double> norms(static_cast<std::size_t>(Q));
  parallel_for(Q, [&](Index q) { norms[static_cast<std::size_t>(q)] = jacobi_svd(gather(c, tl, q)).s.sum(); });
  double total = 0.0;
  for (double n : norms) { total += n; }
  return total;
}

void ReconConfig::validate(Index height, Index width) const {
  if (rank < 1) { throw InvalidArgument("ReconConfig: rank must be >= 1"); }
  if (!(admm_rho > 0.0)) { throw InvalidArgument("ReconConfig: admm_rho must be > 0"); }
  if (!(llr_lambda >= 0.0)) { throw InvalidArgument("ReconConfig: llr_lambda must be >= 0"); }
  if (patch_size < 1 || patch_size > height || patch_size > width) {
    throw InvalidArgument("ReconConfig: patch_size must not exceed the image size");
  }
  if (patch_stride < 1 || patch_stride > patch_size) { throw InvalidArgument("ReconConfig: patch_stride must be in [1, patch_size]"); }
  if (n_admm_iters < 1 || n_cg_iters < 1) { throw InvalidArgument("ReconConfig: iteration counts must be >= 1"); }
}

namespace {

// CG on (E^H E + shift I) x = b, starting from x.
void conjugate_gradient(const EncodingOperator &op, double shift, const Cx3 &b, Cx3 &x, Index iterations) {
  auto apply = [&](const Cx3 &v) {
    Cx3 out = op.normal(v);
    if (shift != 0.0) { flat(out) += shift * flat(v); }
    return out;
  };
  Cx3 r = b;
  {
    Cx3 const ax = apply(x);
    flat(r) -= flat(ax);
  }
  Cx3 p = r;
  double rr = flat(r).squaredNorm();
  double const stop = 1e-30 * std::max(1.0, flat(b).squaredNorm());
  for (Index it = 0; it < iterations && rr > stop; ++it) {
    Cx3 const ap = apply(p);
    double const pap = flat(p).dot(flat(ap)).real();
    if (!(pap > 0.0)) { break; }
    double const alpha = rr / pap;
    flat(x) += alpha * flat(p);
    flat(r) -= alpha * flat(ap);
    double const rr_new = flat(r).squaredNorm();
    flat(p) = flat(r) + (rr_new / rr) * flat(p);
    rr = rr_new;
  }
}

} // namespace

Cx3 cg_least_squares(const EncodingOperator &op, const Cx4 &y, Index iterations) {
  Cx3 const b = op.adjoint(y);
  Cx3 x(b.dimension(0), b.dimension(1), b.dimension(2));
  x.setZero();
  conjugate_gradient(op, 0.0, b, x, iterations);
  return x;
}

AdmmResult admm_solve(const Cx4 &y, const SubspaceBasis &basis, const CoilSet &coils, const SamplingMask &masks,
                      const ReconConfig &config) {
  Index const H = coils.sensitivities.dimension(1), W = coils.sensitivities.dimension(2), R = basis.rank();
  config.validate(H, W);
  if (config.rank != R) { throw InvalidArgument("admm_solve: config rank differs from the basis rank"); }
  EncodingOperator const op(basis.phi, coils.sensitivities, masks.mask);

  Cx3 const ehy = op.adjoint(y);
  double const rho = config.admm_rho;
  double const lambda = config.llr_lambda;
  Cx3 c(R, H, W), z(R, H, W), u(R, H, W);
  c.setZero();
  z.setZero();
  u.setZero();

  AdmmResult result;
  for (Index it = 0; it < config.n_admm_iters; ++it) {
    Cx3 rhs = ehy;
    flat(rhs) += rho * (flat(z) - flat(u));
    conjugate_gradient(op, rho, rhs, c, config.n_cg_iters);

    std::mt19937_64 rng = make_stream(config.seed, {static_cast<std::uint64_t>(it)});
    std::uniform_int_distribution<Index> offset(0, config.patch_size - 1);
    Index const oy = offset(rng);
    Index const ox = offset(rng);
    Cx3 v = c;
    flat(v) += flat(u);
    Cx3 const z_prev = z;
    z = llr_prox(v, lambda / rho, config.patch_size, config.patch_stride, oy, ox);
    flat(u) += flat(c) - flat(z);

    if (!all_finite(c) || !all_finite(z) || !all_finite(u)) {
      throw NumericalError("admm_solve: non-finite iterate at iteration " + std::to_string(it));
    }
    AdmmIteration rec;
    rec.iter = it;
    rec.primal_residual = (flat(c) - flat(z)).norm();
    rec.dual_residual = rho * (flat(z) - flat(z_prev)).norm();
    Cx4 const ec = op.encode(c);
    double const fit = 0.5 * (Eigen::Map<const CxVec>(ec.data(), ec.size()) - flat(y)).squaredNorm();
    rec.objective = fit + (lambda > 0.0 ? lambda * llr_norm(c, config.patch_size, config.patch_stride) : 0.0);
    result.log.push_back(rec);
  }
  result.c = std::move(c);
  return result;
}

void write_residual_csv(std::ostream &out, const std::vector<AdmmIteration> &log) {
  out << "iter,primal_residual,dual_residual,objective\n";
  out.precision(12);
  for (const auto &r : log) {
    out << r.iter << ',' << r.primal_residual << ',' << r.dual_residual << ',' << r.objective << '\n';
  }
}

Cx3 project_to_time(const Cx3 &c, const SubspaceBasis &basis) {
  if (c.dimension(0) != basis.rank()) { throw InvalidArgument("project_to_time: rank mismatch"); }
  Cx3 x(basis.frames(), c.dimension(1), c.dimension(2));
  as_matrix(x).noalias() = basis.phi * as_matrix(c);
  return x;
}

Cx3 project_to_subspace(const Cx3 &x, const SubspaceBasis &basis) {
  if (x.dimension(0) != basis.frames()) { throw InvalidArgument("project_to_subspace: frame count mismatch"); }
  Cx3 c(basis.rank(), x.dimension(1), x.dimension(2));
  as_matrix(c).noalias() = basis.phi.adjoint() * as_matrix(x);
  return c;
}

double nrmse(const Cx3 &estimate, const Cx3 &truth, const U8_2 &mask) {
  if (estimate.dimensions() != truth.dimensions()) { throw InvalidArgument("nrmse: shape mismatch"); }
  Index const T = truth.dimension(0), N = truth.dimension(1) * truth.dimension(2);
  bool const use_mask = mask.size() > 0;
  if (use_mask && mask.size() != N) { throw InvalidArgument("nrmse: mask shape mismatch"); }
  double num = 0.0, den = 0.0;
  for (Index t = 0; t < T; ++t) {
    for (Index v = 0; v < N; ++v) {
      if (use_mask && !mask.data()[v]) { continue; }
      num += std::norm(estimate.data()[t * N + v] - truth.data()[t * N + v]);
      den += std::norm(truth.data()[t * N + v]);
    }
  }
  if (!(den > 0.0)) { throw InvalidArgument("nrmse: reference is zero on the mask"); }
  return std::sqrt(num / den);
}

} // namespace qti
