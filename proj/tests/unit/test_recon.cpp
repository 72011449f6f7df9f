#include <Eigen/SVD>
#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "qti/design.hpp"
#include "qti/parallel.hpp"
#include "qti/recon.hpp"
#include "qti/svd.hpp"

using namespace qti;
using qti::test::fill_random;
using qti::test::max_abs_diff;
using qti::test::norm_of;

namespace {

Cx dot(const Cx3 &a, const Cx3 &b) {
  Cx s = 0.0;
  for (Index i = 0; i < a.size(); ++i) { s += std::conj(a.data()[i]) * b.data()[i]; }
  return s;
}

Cx dot(const Cx4 &a, const Cx4 &b) {
  Cx s = 0.0;
  for (Index i = 0; i < a.size(); ++i) { s += std::conj(a.data()[i]) * b.data()[i]; }
  return s;
}

SubspaceBasis random_basis(Index T, Index R, std::mt19937_64 &rng) {
  CxMat a(T, R);
  fill_random(a, rng);
  Eigen::HouseholderQR<CxMat> qr(a);
  SubspaceBasis b;
  b.phi = qr.householderQ() * CxMat::Identity(T, R);
  b.energy_fraction = 1.0;
  return b;
}

SubspaceBasis identity_basis(Index T) {
  SubspaceBasis b;
  b.phi = CxMat::Identity(T, T);
  b.energy_fraction = 1.0;
  return b;
}

CoilSet unit_coil(Index H, Index W) {
  CoilSet c;
  c.sensitivities = Cx3(1, H, W);
  c.sensitivities.setConstant(Cx(1.0, 0.0));
  return c;
}

InferenceGrid small_grid() { return InferenceGrid::defaults(12, 12); }

struct DeskProblem {
  PhantomDef phantom;
  SequenceDesign design;
  SubspaceBasis basis;
  CoilSet coils;
  Cx3 truth;
  U8_2 interior;
};

DeskProblem desk_problem() {
  DeskProblem p;
  p.design = default_design();
  p.phantom = build_phantom(PhantomSpec{}, 42);
  p.basis = compute_basis(build_ensemble(p.design, default_ensemble_points()), 10);
  p.coils = make_coil_maps(64, 64, 4, 42);
  p.truth = phantom_series(p.phantom, p.design);
  p.interior = U8_2(64, 64);
  p.interior.setZero();
  for (auto l : p.phantom.labels_present()) {
    U8_2 const m = interior_mask(p.phantom.labels, l, 1);
    for (Index i = 0; i < m.size(); ++i) { p.interior.data()[i] |= m.data()[i]; }
  }
  return p;
}

struct DeskRun {
  double nrmse = 0.0;
  double final_primal = 0.0;
  double y_norm = 0.0;
};

DeskRun run_desk(const DeskProblem &p, double acceleration) {
  SamplingMask const masks = make_masks(64, 64, p.design.repetitions(), acceleration, 4.0, 42);
  double const sigma = noise_sigma_for_snr(p.truth, 30.0);
  KSpaceSeries const k = acquire(p.truth, p.coils, masks, sigma, 42);
  ReconConfig cfg;
  cfg.seed = 42;
  AdmmResult const r = admm_solve(k.y, p.basis, p.coils, masks, cfg);
  return {nrmse(project_to_time(r.c, p.basis), p.truth, p.interior), r.log.back().primal_residual, norm_of(k.y)};
}

} // namespace

TEST_CASE("ensemble size and rows") {
  auto const pts = default_ensemble_points();
  InferenceGrid const g = InferenceGrid::defaults();
  CHECK(g.cells().size() == 2723);
  CHECK(pts.size() == 2729);
  Index flowing = 0;
  for (auto const &p : pts) { flowing += p.velocity_mm_s > 0.0 ? 1 : 0; }
  CHECK(flowing == 6);

  SequenceDesign const d = default_design();
  auto const few = ensemble_points(small_grid(), {10.0});
  SignalEnsemble const e = build_ensemble(d, few);
  CHECK(e.normalized);
  CHECK((e.d.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(e.frames() == 260);
}

TEST_CASE("ensemble of one point") {
  SequenceDesign const d = default_design();
  TissueParams const p{1450.0, 85.0, 1.0, 0.0};
  SignalEnsemble const e = build_ensemble(d, {p, p}, false);
  REQUIRE(e.atoms() == 2);
  CHECK((e.d.row(0).transpose() - simulate_with_flow(d, p)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((e.d.row(0) - e.d.row(1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(build_ensemble(d, {}), InvalidArgument);
}

TEST_CASE("basis orthonormality and full rank projection") {
  SequenceDesign const d = default_design();
  SignalEnsemble const e = build_ensemble(d, ensemble_points(small_grid(), {10.0, 40.0}));
  SubspaceBasis const full = compute_basis(e, d.repetitions());
  CHECK((full.phi.adjoint() * full.phi - CxMat::Identity(260, 260)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(max_projection_error(e, full) < 1e-10);

  SubspaceBasis const b = compute_basis(e, 10);
  CHECK((b.phi.adjoint() * b.phi - CxMat::Identity(10, 10)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(b.energy_fraction > 0.99);
  CHECK(b.energy_fraction <= 1.0 + 1e-12);
  CHECK_THROWS_AS(compute_basis(e, 261), InvalidArgument);
  CHECK_THROWS_AS(compute_basis(e, 0), InvalidArgument);
}

TEST_CASE("rank 10 basis represents every default atom") {
  SignalEnsemble const e = build_ensemble(default_design(), default_ensemble_points());
  double const err = max_projection_error(e, compute_basis(e, 10));
  CAPTURE(err);
  CHECK(err < 0.05);
}

TEST_CASE("subspace projection") {
  std::mt19937_64 rng(31);
  SubspaceBasis const b = random_basis(40, 6, rng);
  Cx3 x(40, 8, 8);
  fill_random(x, rng);
  Cx3 const once = project_to_time(project_to_subspace(x, b), b);
  Cx3 const twice = project_to_time(project_to_subspace(once, b), b);
  CHECK(max_abs_diff(once, twice) < 1e-12);
  CHECK(norm_of(once) <= norm_of(x) + 1e-12);

  Cx3 c(6, 8, 8);
  fill_random(c, rng);
  Cx3 const span = project_to_time(c, b);
  CHECK(max_abs_diff(project_to_subspace(span, b), c) < 1e-10);
  Cx3 zero(6, 8, 8);
  zero.setZero();
  CHECK(norm_of(project_to_time(zero, b)) == 0.0);
  CHECK_THROWS_AS(project_to_time(x, b), InvalidArgument);
}

TEST_CASE("encoding operator adjoint") {
  std::mt19937_64 rng(32);
  Index const T = 12, R = 4, H = 16, W = 16, C = 3;
  SubspaceBasis const b = random_basis(T, R, rng);
  CoilSet const coils = make_coil_maps(H, W, C, 3);
  SamplingMask const masks = make_masks(H, W, T, 3.0, 2.0, 3);
  EncodingOperator const op(b.phi, coils.sensitivities, masks.mask);
  Cx3 c(R, H, W);
  Cx4 y(T, C, H, W);
  fill_random(c, rng);
  fill_random(y, rng);
  Cx4 const ec = op.encode(c);
  Cx3 const ehy = op.adjoint(y);
  double const rel = std::abs(dot(ec, y) - dot(c, ehy)) / (norm_of(c) * norm_of(y));
  CAPTURE(rel);
  CHECK(rel < 1e-6);
  CHECK(max_abs_diff(op.normal(c), op.adjoint(ec)) < 1e-10);
  CHECK(max_abs_diff(apply_encode(c, b, coils, masks), ec) == 0.0);
  CHECK(max_abs_diff(apply_adjoint(y, b, coils, masks), ehy) == 0.0);

  Cx3 zero(R, H, W);
  zero.setZero();
  CHECK(norm_of(op.encode(zero)) == 0.0);
  CHECK(norm_of(op.normal(zero)) == 0.0);
  Cx3 wrong(R + 1, H, W);
  CHECK_THROWS_AS(op.encode(wrong), InvalidArgument);
}

TEST_CASE("unitary encoding case") {
  std::mt19937_64 rng(33);
  Index const T = 6, H = 8, W = 8;
  SubspaceBasis const b = identity_basis(T);
  EncodingOperator const op(b.phi, unit_coil(H, W).sensitivities, make_masks(H, W, T, 1.0, 0.0, 1).mask);
  Cx3 c(T, H, W);
  fill_random(c, rng);
  CHECK(max_abs_diff(op.normal(c), c) < 1e-10);
  CHECK(max_abs_diff(op.adjoint(op.encode(c)), c) < 1e-10);
}

TEST_CASE("llr prox limits") {
  std::mt19937_64 rng(34);
  Cx3 c(5, 16, 16);
  fill_random(c, rng);
  CHECK(max_abs_diff(llr_prox(c, 0.0, 8, 8), c) < 1e-12);
  CHECK(max_abs_diff(llr_prox(c, 0.0, 8, 4, 3, 5), c) < 1e-12);
  CHECK(norm_of(llr_prox(c, 1e6, 8, 8, 1, 2)) == 0.0);
  CHECK_THROWS_AS(llr_prox(c, -1.0, 8, 8), InvalidArgument);
  CHECK_THROWS_AS(llr_prox(c, 1.0, 32, 32), InvalidArgument);
}

TEST_CASE("whole image patch equals global singular value thresholding") {
  std::mt19937_64 rng(35);
  Index const R = 5, H = 16, W = 16;
  Cx3 c(R, H, W);
  fill_random(c, rng);
  CxMat cas(H * W, R);
  for (Index r = 0; r < R; ++r) {
    for (Index v = 0; v < H * W; ++v) { cas(v, r) = c.data()[r * H * W + v]; }
  }
  Eigen::BDCSVD<CxMat> svd(cas, Eigen::ComputeThinU | Eigen::ComputeThinV);
  double const tau = 0.6 * svd.singularValues()[2];
  RealVec const s = (svd.singularValues().array() - tau).max(0.0);
  CxMat const ref = svd.matrixU() * s.asDiagonal() * svd.matrixV().adjoint();
  for (auto [oy, ox] : {std::pair<Index, Index>{0, 0}, {5, 11}}) {
    Cx3 const got = llr_prox(c, tau, 16, 16, oy, ox);
    double worst = 0.0;
    for (Index r = 0; r < R; ++r) {
      for (Index v = 0; v < H * W; ++v) { worst = std::max(worst, std::abs(got.data()[r * H * W + v] - ref(v, r))); }
    }
    CHECK(worst < 1e-10);
  }
  CHECK(llr_norm(c, 16, 16) == doctest::Approx(svd.singularValues().sum()).epsilon(1e-12));
}

TEST_CASE("admm with full sampling recovers the coefficients") {
  std::mt19937_64 rng(36);
  Index const T = 30, R = 5, H = 16, W = 16;
  SubspaceBasis const b = random_basis(T, R, rng);
  CoilSet const coils = make_coil_maps(H, W, 2, 1);
  SamplingMask const masks = make_masks(H, W, T, 1.0, 0.0, 1);
  Cx3 c(R, H, W);
  fill_random(c, rng);
  Cx4 const y = apply_encode(c, b, coils, masks);
  ReconConfig cfg;
  cfg.rank = R;
  cfg.llr_lambda = 0.0;
  AdmmResult const r = admm_solve(y, b, coils, masks, cfg);
  CHECK(norm_of(Cx3(r.c - c)) / norm_of(c) < 1e-3);
  CHECK(r.log.size() == 50);
}

TEST_CASE("admm without regularization is least squares") {
  std::mt19937_64 rng(37);
  Index const T = 24, R = 3, H = 16, W = 16;
  SubspaceBasis const b = random_basis(T, R, rng);
  CoilSet const coils = make_coil_maps(H, W, 4, 2);
  SamplingMask const masks = make_masks(H, W, T, 2.0, 2.0, 2);
  Cx4 y(T, 4, H, W);
  fill_random(y, rng);
  for (Index t = 0; t < T; ++t) {
    for (Index c = 0; c < 4; ++c) {
      for (Index i = 0; i < H; ++i) {
        for (Index j = 0; j < W; ++j) {
          if (!masks.mask(t, i, j)) { y(t, c, i, j) = 0.0; }
        }
      }
    }
  }
  ReconConfig cfg;
  cfg.rank = R;
  cfg.llr_lambda = 0.0;
  cfg.admm_rho = 0.01;
  AdmmResult const r = admm_solve(y, b, coils, masks, cfg);
  Cx3 const ls = cg_least_squares(EncodingOperator(b.phi, coils.sensitivities, masks.mask), y, 200);
  double const rel = norm_of(Cx3(r.c - ls)) / norm_of(ls);
  CAPTURE(rel);
  CHECK(rel < 1e-6);
}

TEST_CASE("admm rejects bad configurations") {
  std::mt19937_64 rng(38);
  SubspaceBasis const b = random_basis(10, 3, rng);
  CoilSet const coils = make_coil_maps(16, 16, 1, 1);
  SamplingMask const masks = make_masks(16, 16, 10, 1.0, 0.0, 1);
  Cx4 y(10, 1, 16, 16);
  y.setZero();
  ReconConfig cfg;
  CHECK_THROWS_AS(admm_solve(y, b, coils, masks, cfg), InvalidArgument);
  cfg.rank = 3;
  cfg.patch_size = 32;
  CHECK_THROWS_AS(admm_solve(y, b, coils, masks, cfg), InvalidArgument);
  cfg.patch_size = 8;
  cfg.patch_stride = 8;
  cfg.n_cg_iters = 0;
  CHECK_THROWS_AS(admm_solve(y, b, coils, masks, cfg), InvalidArgument);
}

TEST_CASE("residual log csv") {
  std::ostringstream os;
  write_residual_csv(os, {{0, 1.5, 0.25, 3.0}, {1, 0.5, 0.125, 2.0}});
  std::string const s = os.str();
  CHECK(s.substr(0, s.find('\n')) == "iter,primal_residual,dual_residual,objective");
  CHECK(std::count(s.begin(), s.end(), '\n') == 3);
}

TEST_CASE("nrmse") {
  Cx3 a(2, 2, 2), b(2, 2, 2);
  b.setConstant(Cx(1.0, 0.0));
  a = b * Cx(1.1, 0.0);
  CHECK(nrmse(a, b) == doctest::Approx(0.1));
  U8_2 mask(2, 2);
  mask.setZero();
  mask(0, 1) = 1;
  CHECK(nrmse(a, b, mask) == doctest::Approx(0.1));
}

TEST_CASE("desk scale reconstruction" * doctest::timeout(600)) {
  DeskProblem const p = desk_problem();
  DeskRun const r8 = run_desk(p, 8.0);
  DeskRun const r4 = run_desk(p, 4.0);
  CAPTURE(r8.nrmse);
  CAPTURE(r4.nrmse);
  CAPTURE(r8.final_primal);
  CAPTURE(r8.y_norm);
  CHECK(r8.final_primal < 1e-3 * r8.y_norm);
  CHECK(r4.final_primal < 1e-3 * r4.y_norm);
  CHECK(r8.nrmse < 0.10);
  CHECK(r4.nrmse <= r8.nrmse + 0.01);
}

TEST_CASE("admm output does not depend on the thread count") {
  std::mt19937_64 rng(39);
  Index const T = 20, R = 4, H = 32, W = 32;
  SubspaceBasis const b = random_basis(T, R, rng);
  CoilSet const coils = make_coil_maps(H, W, 3, 4);
  SamplingMask const masks = make_masks(H, W, T, 4.0, 3.0, 4);
  Cx3 c(R, H, W);
  fill_random(c, rng);
  Cx4 const y = apply_encode(c, b, coils, masks);
  ReconConfig cfg;
  cfg.rank = R;
  cfg.llr_lambda = 0.05;
  cfg.n_admm_iters = 6;
  cfg.seed = 17;
  set_thread_count(1);
  AdmmResult const a = admm_solve(y, b, coils, masks, cfg);
  set_thread_count(3);
  AdmmResult const m = admm_solve(y, b, coils, masks, cfg);
  set_thread_count(1);
  CHECK(max_abs_diff(a.c, m.c) == 0.0);
  REQUIRE(a.log.size() == m.log.size());
  CHECK(a.log.back().objective == m.log.back().objective);
}
