// Acceptance checks 1-12. With an argument N only check N runs; otherwise all
// of them. One PASS/FAIL line per check; the exit status is non-zero if any
// check fails.

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "qti/analysis.hpp"
#include "qti/design.hpp"
#include "qti/epg.hpp"
#include "qti/inference.hpp"
#include "qti/parallel.hpp"
#include "qti/phantom.hpp"
#include "qti/random.hpp"
#include "qti/recon.hpp"

#ifdef QTI_HAVE_PIPELINE
#include "config.hpp"
#include "stages.hpp"
#endif

using namespace qti;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Clock {
public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char *f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const TissuePrior &prior() {
  static const TissuePrior p = TissuePrior::defaults();
  return p;
}

TissueParams class_mean(const TissueClass &c) { return {c.mean_t1_ms, c.mean_t2_ms, 1.0, 0.0}; }

CxVec add_noise(CxVec x, double sigma, std::mt19937_64 &rng) {
  std::normal_distribution<double> g(0.0, sigma);
  for (auto &v : x) {
    double const re = g(rng);
    v += Cx(re, g(rng));
  }
  return x;
}

U8_2 stationary_interiors(const PhantomDef &ph) {
  U8_2 m(ph.height(), ph.width());
  m.setZero();
  for (auto l : ph.labels_present()) {
    if (l == 0 || ph.class_of(l).vessel) { continue; }
    U8_2 const i = interior_mask(ph.labels, l, 1);
    for (Index k = 0; k < m.size(); ++k) { m.data()[k] |= i.data()[k]; }
  }
  return m;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t const n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome epg_vs_isochromat() {
  Clock clock;
  SequenceDesign const d = default_design();
  double worst = 0.0;
  for (const auto &c : prior().classes) {
    CxVec const e = simulate_transient(d, class_mean(c));
    CxVec const b = isochromat_signal(d, class_mean(c), 2000);
    worst = std::max(worst, (e - b).cwiseAbs().maxCoeff());
  }
  double const t = clock.seconds();
  return {worst < 1e-3 && t < 30.0, fmt("max |EPG - isochromat| = %.3g (limit 1e-3), %.1f s (limit 30 s)", worst, t)};
}

Outcome flow_reduction() {
  SequenceDesign const d = default_design();
  double worst_signal = 0.0;
  std::vector<TissueParams> params;
  for (const auto &c : prior().classes) { params.push_back(class_mean(c)); }
  for (const auto &p : params) {
    worst_signal = std::max(worst_signal, (simulate_with_flow(d, p) - simulate_transient(d, p)).cwiseAbs().maxCoeff());
  }
  double worst_sum = 0.0;
  for (double v : {0.0, 2.0, 5.0, 10.0, 20.0, 40.0, 80.0}) {
    RealMat const w = cohort_weights(d, v, d.slice_thickness_mm);
    worst_sum = std::max(worst_sum, (w.colwise().sum().array() - 1.0).abs().maxCoeff());
  }
  return {worst_signal < 1e-12 && worst_sum < 1e-12,
          fmt("v=0 max diff %.3g, weight column sums off by %.3g (limit 1e-12)", worst_signal, worst_sum)};
}

Outcome flow_hyperintensity() {
  SequenceDesign const d = default_design();
  TissueParams sb{1740.0, 275.0, 1.0, 0.0};
  CxVec const still = simulate_transient(d, sb);
  bool pass = true;
  std::string detail;
  for (double v : {5.0, 20.0, 80.0}) {
    sb.velocity_mm_s = v;
    CxVec const moving = simulate_with_flow(d, sb);
    Index below = 0, signed_below = 0, first = -1;
    double worst = 0.0;
    for (Index n = 0; n < d.repetitions(); ++n) {
      double const gap = std::abs(moving[n]) - std::abs(still[n]);
      if (gap < 0.0) {
        ++below;
        if (first < 0) { first = n; }
        worst = std::min(worst, gap);
      }
      if (-moving[n].imag() < -still[n].imag() - 1e-12) { ++signed_below; }
    }
    pass = pass && below == 0;
    detail += fmt("v=%g: |f| below stationary at %lld reps (first %lld, worst %.3g), signed echo below at %lld; ", v,
                  static_cast<long long>(below), static_cast<long long>(first), worst,
                  static_cast<long long>(signed_below));
  }
  return {pass, detail};
}

Outcome design_landscape() {
  Clock clock;
  GridSearchResult const r = grid_search(prior(), {1.0, 15.0}, {40.0, 90.0}, 1.0, 1234);
  double const t = clock.seconds();
  const LandscapeCell &best = r.best_cell();
  double const a = best.candidate.alpha_a_deg, b = best.candidate.alpha_b_deg;
  bool const near = std::abs(a - 7.0) <= 3.0 && std::abs(b - 70.0) <= 10.0;
  Index rank_7_70 = -1;
  double cost_7_70 = NAN;
  for (std::size_t k = 0; k < r.ranking.size(); ++k) {
    const LandscapeCell &c = r.cells[static_cast<std::size_t>(r.ranking[k])];
    if (c.candidate.alpha_a_deg == 7.0 && c.candidate.alpha_b_deg == 70.0) {
      rank_7_70 = static_cast<Index>(k);
      cost_7_70 = c.cost.total_cost;
    }
  }
  bool const pass = a <= 10.0 && b >= 55.0 && b <= 85.0 && t < 600.0;
  return {pass, fmt("argmin (%g, %g) cost %.4f over %zu cells, %.0f s; (7, 70) %s the 3x10 deg neighbourhood, "
                    "cost %.4f, rank %lld",
                    a, b, best.cost.total_cost, r.cells.size(), t, near ? "within" : "outside", cost_7_70,
                    static_cast<long long>(rank_7_70))};
}

Outcome fisher_properties() {
  SequenceDesign const d = default_design();
  std::vector<TissueParams> const draws = sample_prior(prior(), 100, 2024);
  double worst_asym = 0.0, min_eig = INFINITY;
  for (const auto &p : draws) {
    Eigen::Matrix2d const f = fisher_matrix(signal_jacobian(d, p));
    worst_asym = std::max(worst_asym, std::abs(f(0, 1) - f(1, 0)) / f.norm());
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(f).eigenvalues().minCoeff() / f.norm());
  }
  std::vector<TissueParams> points;
  for (const auto &c : prior().classes) { points.push_back(class_mean(c)); }
  points.insert(points.end(), draws.begin(), draws.begin() + 20);
  bool monotone = true;
  for (const auto &p : points) {
    double prev = -INFINITY;
    for (Index T : {50, 100, 200, 260}) {
      SequenceDesign s = d;
      s.flip_angles_deg.resize(static_cast<std::size_t>(T));
      double const ld = log_det_fisher(fisher_matrix(signal_jacobian(s, p)));
      monotone = monotone && ld >= prev;
      prev = ld;
    }
  }
  bool const pass = worst_asym < 1e-12 && min_eig >= -1e-12 && monotone;
  return {pass, fmt("100 draws: max asymmetry %.3g, min eigenvalue / norm %.3g; log det non-decreasing over "
                    "T = 50, 100, 200, 260 for %zu parameter points: %s",
                    worst_asym, min_eig, points.size(), monotone ? "yes" : "no")};
}

Outcome operator_integrity() {
  SequenceDesign const d = default_design();
  SubspaceBasis const basis = compute_basis(build_ensemble(d, default_ensemble_points()), 10);
  Index const H = 64, W = 64;
  CoilSet const coils = make_coil_maps(H, W, 4, 7);
  SamplingMask const masks = make_masks(H, W, d.repetitions(), 8.0, 4.0, 7);

  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  Cx3 c(10, H, W);
  for (Index i = 0; i < c.size(); ++i) {
    double const re = g(rng);
    c.data()[i] = Cx(re, g(rng));
  }
  Cx4 y(d.repetitions(), 4, H, W);
  for (Index i = 0; i < y.size(); ++i) {
    double const re = g(rng);
    y.data()[i] = Cx(re, g(rng));
  }
  Cx4 const ec = apply_encode(c, basis, coils, masks);
  Cx3 const ey = apply_adjoint(y, basis, coils, masks);
  Cx lhs = 0.0, rhs = 0.0;
  double n_ec = 0.0, n_y = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    lhs += std::conj(ec.data()[i]) * y.data()[i];
    n_ec += std::norm(ec.data()[i]);
    n_y += std::norm(y.data()[i]);
  }
  for (Index i = 0; i < c.size(); ++i) { rhs += std::conj(c.data()[i]) * ey.data()[i]; }
  double const adj = std::abs(lhs - rhs) / std::sqrt(n_ec * n_y);

  // Noiseless, fully sampled phantom whose series lies in the subspace.
  PhantomDef const ph = build_phantom(PhantomSpec{}, 1234);
  Cx3 const truth = project_to_time(project_to_subspace(phantom_series(ph, d), basis), basis);
  SamplingMask const full = make_masks(H, W, d.repetitions(), 1.0, 0.0, 7);
  KSpaceSeries const k = acquire(truth, coils, full, 0.0, 7);
  AdmmResult const r = admm_solve(k.y, basis, coils, full, ReconConfig{});
  double const e = nrmse(project_to_time(r.c, basis), truth);
  return {adj < 1e-6 && e < 1e-3, fmt("adjoint dot test %.3g (limit 1e-6), full-sampling NRMSE %.3g (limit 1e-3)", adj, e)};
}

Outcome subspace_fidelity() {
  SignalEnsemble const ens = build_ensemble(default_design(), default_ensemble_points());
  SubspaceBasis const basis = compute_basis(ens, 10);
  double const err = max_projection_error(ens, basis);

  // Oracle: leading right singular vectors of the atom matrix.
  Eigen::BDCSVD<CxMat> svd(ens.d, Eigen::ComputeThinV);
  CxMat const v = svd.matrixV().leftCols(10);
  double oracle = 0.0;
  for (Index i = 0; i < ens.atoms(); ++i) {
    CxVec const a = ens.d.row(i).transpose();
    oracle = std::max(oracle, (a - v * (v.adjoint() * a)).norm() / a.norm());
  }
  bool const pass = err < 0.05 && std::abs(err - oracle) < 1e-6;
  return {pass, fmt("%lld atoms, rank 10 max relative error %.4f (SVD oracle %.4f), limit 0.05",
                    static_cast<long long>(ens.atoms()), err, oracle)};
}

Outcome end_to_end() {
  Clock clock;
  std::uint64_t const seed = 1234;
  SequenceDesign const d = default_design();
  PhantomDef const ph = build_phantom(PhantomSpec{}, stream_seed(seed, {1}));
  CoilSet const coils = make_coil_maps(64, 64, 4, stream_seed(seed, {2}));
  SamplingMask const masks = make_masks(64, 64, d.repetitions(), 8.0, 4.0, stream_seed(seed, {3}));
  Cx3 const x = phantom_series(ph, d);
  KSpaceSeries const k = acquire(x, coils, masks, noise_sigma_for_snr(x, 30.0), stream_seed(seed, {4}));
  SubspaceBasis const basis = compute_basis(build_ensemble(d, default_ensemble_points()), 10);
  ReconConfig cfg;
  cfg.seed = stream_seed(seed, {5});
  Cx3 const series = project_to_time(admm_solve(k.y, basis, coils, masks, cfg).c, basis);
  U8_2 mask(64, 64);
  for (Index i = 0; i < mask.size(); ++i) { mask.data()[i] = ph.labels.data()[i] != 0; }
  ParameterMaps const maps = infer_maps(series, d, InferenceGrid::defaults(), InferenceOptions{}, mask, stream_seed(seed, {6}));

  U8_2 const interior = stationary_interiors(ph);
  std::vector<double> e1, e2;
  std::string per_class;
  for (auto l : ph.labels_present()) {
    const LabelClass &c = ph.class_of(l);
    if (l == 0 || c.vessel) { continue; }
    std::vector<double> c1, c2;
    U8_2 const m = interior_mask(ph.labels, l, 1);
    for (Index i = 0; i < m.size(); ++i) {
      if (!m.data()[i]) { continue; }
      c1.push_back(std::abs(maps.t1_ms.data()[i] - c.params.t1_ms) / c.params.t1_ms);
      c2.push_back(std::abs(maps.t2_ms.data()[i] - c.params.t2_ms) / c.params.t2_ms);
    }
    per_class += fmt("%s %.3f/%.3f ", c.name.c_str(), median(c1), median(c2));
    e1.insert(e1.end(), c1.begin(), c1.end());
    e2.insert(e2.end(), c2.begin(), c2.end());
  }
  double const m1 = median(e1), m2 = median(e2), t = clock.seconds();
  return {m1 < 0.05 && m2 < 0.10 && t < 600.0,
          fmt("median |T1 err| %.4f (limit 0.05), |T2 err| %.4f (limit 0.10) over %zu interior voxels; per class "
              "T1/T2: %s; %.0f s",
              m1, m2, e1.size(), per_class.c_str(), t)};
}

Outcome inference_consistency() {
  SequenceDesign const d = default_design();
  InferenceGrid const g = InferenceGrid::defaults();
  GridModel const model(d, g);
  PhantomDef const ph = build_phantom(PhantomSpec{}, 1234);
  Cx3 const x = phantom_series(ph, d);
  double const sigma = noise_sigma_for_snr(x, 30.0);
  U8_2 const interior = stationary_interiors(ph);
  std::vector<Index> candidates;
  for (Index v = 0; v < interior.size(); ++v) {
    if (interior.data()[v]) { candidates.push_back(v); }
  }
  std::mt19937_64 rng(99);
  std::shuffle(candidates.begin(), candidates.end(), rng);

  double const step1 = std::log(g.t1_ms[1] / g.t1_ms[0]);
  double const step2 = std::log(g.t2_ms[1] / g.t2_ms[0]);
  SupportBounds support;
  support.t1_min_ms = g.t1_ms[0];
  support.t1_max_ms = g.t1_ms[g.t1_ms.size() - 1];
  support.t2_min_ms = g.t2_ms[0];
  support.t2_max_ms = g.t2_ms[g.t2_ms.size() - 1];
  Index const N = x.dimension(1) * x.dimension(2), T = d.repetitions();
  int tm_ok = 0, dict_ok = 0;
  double worst1 = 0.0, worst2 = 0.0;
  for (int k = 0; k < 20; ++k) {
    Index const v = candidates[static_cast<std::size_t>(k)];
    CxVec s(T);
    for (Index t = 0; t < T; ++t) { s[t] = x.data()[t * N + v]; }
    CxVec const noisy = add_noise(s, sigma, rng);
    PosteriorSummary const grid = model.posterior(noisy, sigma).summary;
    PosteriorSummary const mc = tmcmc_sample(noisy, d, support, sigma, TmcmcOptions{}, stream_seed(99, {static_cast<std::uint64_t>(v)})).summary;
    // Cell of the sampled maximum on the log-spaced grid vs the grid argmax cell.
    double const r1 = std::log(mc.mle_t1_ms / grid.mle_t1_ms) / step1;
    double const r2 = std::log(mc.mle_t2_ms / grid.mle_t2_ms) / step2;
    worst1 = std::max(worst1, std::abs(r1));
    worst2 = std::max(worst2, std::abs(r2));
    tm_ok += (std::abs(std::lround(r1)) <= 1 && std::abs(std::lround(r2)) <= 1) ? 1 : 0;
    DictionaryMatch const m = dictionary_match(noisy, model.dictionary());
    dict_ok += (m.theta.t1_ms == grid.mle_t1_ms && m.theta.t2_ms == grid.mle_t2_ms) ? 1 : 0;
  }

  // Posterior widths on fine grids around the class means.
  auto width = [&](double t1, double t2, std::uint64_t seed) {
    std::mt19937_64 r(seed);
    InferenceGrid const z{RealVec::LinSpaced(121, 0.99 * t1, 1.01 * t1), RealVec::LinSpaced(121, 0.88 * t2, 1.12 * t2)};
    return grid_posterior(add_noise(simulate_transient(d, {t1, t2, 1.0, 0.0}), sigma, r), d, z, sigma).summary;
  };
  PosteriorSummary const wm = width(900.0, 60.0, 10), gm = width(1450.0, 85.0, 11), csf = width(3600.0, 1750.0, 12);
  bool const ordered = csf.std_t1_ms > gm.std_t1_ms && gm.std_t1_ms > wm.std_t1_ms && csf.std_t2_ms > gm.std_t2_ms &&
                       gm.std_t2_ms > wm.std_t2_ms;
  bool const pass = tm_ok == 20 && dict_ok == 20 && ordered;
  return {pass, fmt("TMCMC MLE within one cell on %d/20 voxels (worst %.2f / %.2f steps), dictionary = grid MLE on "
                    "%d/20; std T1 CSF %.2f > GM %.2f > WM %.2f, std T2 CSF %.2f > GM %.3f > WM %.3f: %s",
                    tm_ok, worst1, worst2, dict_ok, csf.std_t1_ms, gm.std_t1_ms, wm.std_t1_ms, csf.std_t2_ms,
                    gm.std_t2_ms, wm.std_t2_ms, ordered ? "yes" : "no")};
}

Outcome angiography() {
  SequenceDesign const d = default_design();
  PhantomDef const ph = build_phantom(PhantomSpec{}, 1234);
  Re2 const a = angio_sum(phantom_series(ph, d), FrameRange::last(d.repetitions()));
  double vessel = 0.0, sb = 0.0;
  Index nv = 0, ns = 0;
  for (Index v = 0; v < a.size(); ++v) {
    const LabelClass &c = ph.class_of(ph.labels.data()[v]);
    if (c.vessel) {
      vessel += a.data()[v];
      ++nv;
    } else if (c.name == "SB") {
      sb += a.data()[v];
      ++ns;
    }
  }
  vessel /= static_cast<double>(std::max<Index>(nv, 1));
  sb /= static_cast<double>(std::max<Index>(ns, 1));
  return {nv > 0 && ns > 0 && vessel > sb,
          fmt("mean angio over frames 100-259: vessels %.4f (%lld voxels), stationary blood %.4f (%lld voxels)", vessel,
              static_cast<long long>(nv), sb, static_cast<long long>(ns))};
}

Outcome metrics() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  auto draw = [&](Index n) {
    RealVec v(n);
    for (auto &x : v) { x = g(rng); }
    return v;
  };
  RealVec const x = draw(100);
  double const self = ccc(x, x);
  int bounded = 0;
  for (int k = 0; k < 100; ++k) {
    RealVec const a = draw(40);
    RealVec const b = (0.8 * a + 0.5 * draw(40)).array() + 0.2 * g(rng);
    bounded += ccc(a, b) <= std::abs(pearson(a, b)) + 1e-15 ? 1 : 0;
  }
  RealVec s(4);
  s << 900.0, 910.0, 890.0, 900.0;
  double const hand = (900.0 / std::sqrt(50.0)) / std::sqrt(3.66);
  double const eff = efficiency(s, 3.66);
  bool const pass = std::abs(self - 1.0) < 1e-12 && bounded == 100 && std::abs(eff - hand) < 1e-12 * hand;
  return {pass, fmt("ccc(x, x) = %.15f, ccc <= |pearson| on %d/100 pairs, efficiency %.6f vs hand %.6f", self, bounded,
                    eff, hand)};
}

std::map<std::string, std::string> read_tree(const fs::path &root) {
  std::map<std::string, std::string> out;
  for (const auto &e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) { continue; }
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[e.path().lexically_relative(root).generic_string()] = s.str();
  }
  return out;
}

Outcome determinism() {
#ifdef QTI_HAVE_PIPELINE
  fs::path const root = fs::temp_directory_path() / "qti_acceptance_determinism";
  fs::remove_all(root);
  cli::ExperimentConfig const config = cli::load_config(QTI_DEFAULT_CONFIG);
  set_thread_count(1);
  cli::cmd_pipeline(config, root / "a");
  set_thread_count(3);
  cli::cmd_pipeline(config, root / "b");
  set_thread_count(0);
  auto const a = read_tree(root / "a"), b = read_tree(root / "b");
  std::size_t differing = 0;
  for (const auto &[name, bytes] : a) { differing += (b.count(name) == 0 || b.at(name) != bytes) ? 1 : 0; }
  fs::remove_all(root);
  return {differing == 0 && a.size() == b.size() && !a.empty(),
          fmt("%zu artifacts per run (1 and 3 threads), %zu differ", a.size(), differing)};
#else
  return {false, "pipeline library not built"};
#endif
}

} // namespace

int main(int argc, char **argv) {
  std::map<int, std::pair<const char *, std::function<Outcome()>>> const checks{
    {1, {"EPG matches the isochromat oracle", epg_vs_isochromat}},
    {2, {"flow model reduces to stationary", flow_reduction}},
    {3, {"flowing blood is hyperintense", flow_hyperintensity}},
    {4, {"design landscape argmin", design_landscape}},
    {5, {"Fisher information properties", fisher_properties}},
    {6, {"encoding operator integrity", operator_integrity}},
    {7, {"rank 10 subspace fidelity", subspace_fidelity}},
    {8, {"end-to-end phantom recovery", end_to_end}},
    {9, {"inference consistency", inference_consistency}},
    {10, {"angiogram vessel contrast", angiography}},
    {11, {"agreement and efficiency metrics", metrics}},
    {12, {"pipeline determinism", determinism}},
  };
  std::vector<int> selected;
  if (argc > 1) {
    int const n = std::atoi(argv[1]);
    if (!checks.count(n)) {
      std::fprintf(stderr, "usage: %s [1-12]\n", argv[0]);
      return 2;
    }
    selected.push_back(n);
  } else {
    for (const auto &[n, c] : checks) { selected.push_back(n); }
  }
  bool all = true;
  for (int n : selected) {
    const auto &[name, run] = checks.at(n);
    Outcome o;
    try {
      o = run();
    } catch (const std::exception &e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", n, name, o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
