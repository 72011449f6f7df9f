#include "qti/inference.hpp"

#include <algorithm>
#include <cmath>

#include "qti/log.hpp"
#include "qti/parallel.hpp"
#include "qti/random.hpp"

namespace qti {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) { throw InvalidArgument("inference: sigma must be finite and > 0"); }
}

double median_in_place(std::vector<double> &v) {
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) { m = 0.5 * (m + *std::max_element(v.begin(), mid)); }
  return m;
}

TissueParams stationary(const TissueParams &theta) { return {theta.t1_ms, theta.t2_ms, 1.0, 0.0}; }

} // namespace

ProfileLikelihood profile_loglike(const CxVec &x, const CxVec &f, double sigma) {
  check_sigma(sigma);
  if (x.size() != f.size()) { throw InvalidArgument("profile_loglike: series length mismatch"); }
  double const ff = f.squaredNorm();
  if (!(ff > 0.0)) { return {}; }
  Cx const ip = f.dot(x);
  double const resid = std::max(0.0, x.squaredNorm() - std::norm(ip) / ff);
  return {-resid / (2.0 * sigma * sigma), ip / ff};
}

ProfileLikelihood profile_loglike(const CxVec &x, const SequenceDesign &design, const TissueParams &theta, double sigma) {
  return profile_loglike(x, simulate_transient(design, stationary(theta)), sigma);
}

Dictionary make_dictionary(const SequenceDesign &design, const std::vector<TissueParams> &points) {
  if (points.empty()) { throw InvalidArgument("make_dictionary: no atoms"); }
  design.validate();
  Dictionary d;
  d.params = points;
  d.atoms.resize(static_cast<Index>(points.size()), design.repetitions());
  d.norms.resize(static_cast<Index>(points.size()));
  parallel_for(static_cast<Index>(points.size()), [&](Index k) {
    CxVec f = simulate_transient(design, stationary(points[static_cast<std::size_t>(k)]));
    double const n = f.norm();
    if (!(n > 0.0)) { throw NumericalError("make_dictionary: zero atom"); }
    d.norms[k] = n;
    d.atoms.row(k) = (f / n).transpose();
  });
  return d;
}

Dictionary make_dictionary(const SequenceDesign &design, const InferenceGrid &grid) {
  grid.validate();
  std::vector<TissueParams> points;
  for (auto [i, j] : grid.cells()) { points.push_back({grid.t1_ms[i], grid.t2_ms[j], 1.0, 0.0}); }
  return make_dictionary(design, points);
}

DictionaryMatch dictionary_match(const CxVec &x, const Dictionary &dict) {
  if (dict.size() == 0) { throw InvalidArgument("dictionary_match: empty dictionary"); }
  if (x.size() != dict.atoms.cols()) { throw InvalidArgument("dictionary_match: series length mismatch"); }
  CxVec const proj = dict.atoms.conjugate() * x;
  DictionaryMatch m;
  double best = -1.0;
  for (Index k = 0; k < proj.size(); ++k) {
    double const a = std::abs(proj[k]);
    if (a > best) {
      best = a;
      m.index = k;
    }
  }
  m.theta = dict.params[static_cast<std::size_t>(m.index)];
  m.pd_hat = proj[m.index];
  m.correlation = best;
  return m;
}

GridModel::GridModel(const SequenceDesign &design, InferenceGrid grid)
  : grid_(std::move(grid)) {
  grid_.validate();
  cells_ = grid_.cells();
  dict_ = make_dictionary(design, grid_);
}

GridPosterior GridModel::posterior(const CxVec &x, double sigma) const {
  if (x.size() != dict_.atoms.cols()) { throw InvalidArgument("grid_posterior: series length mismatch"); }
  for (Index t = 0; t < x.size(); ++t) {
    if (!std::isfinite(x[t].real()) || !std::isfinite(x[t].imag())) { throw InvalidArgument("grid_posterior: non-finite data"); }
  }
  return posterior_from_projections(dict_.atoms.conjugate() * x, x.squaredNorm(), sigma);
}

GridPosterior GridModel::posterior_from_projections(const CxVec &projections, double x_norm2, double sigma) const {
  check_sigma(sigma);
  Index const K = static_cast<Index>(cells_.size());
  if (projections.size() != K) { throw InvalidArgument("grid_posterior: projection count mismatch"); }
  double const inv2s2 = 1.0 / (2.0 * sigma * sigma);

  GridPosterior out;
  out.grid = grid_;
  out.loglike = RealMat::Constant(grid_.t1_ms.size(), grid_.t2_ms.size(), kNegInf);
  out.probability = RealMat::Zero(grid_.t1_ms.size(), grid_.t2_ms.size());

  RealVec ll(K);
  Index best = -1;
  double best_ll = kNegInf;
  for (Index k = 0; k < K; ++k) {
    ll[k] = -std::max(0.0, x_norm2 - std::norm(projections[k])) * inv2s2;
    if (ll[k] > best_ll) {
      best_ll = ll[k];
      best = k;
    }
  }
  if (best < 0) { throw NumericalError("grid_posterior: every cell has -inf log-likelihood"); }

  double z = 0.0;
  for (Index k = 0; k < K; ++k) { z += std::exp(ll[k] - best_ll); }
  double m1 = 0.0, m2 = 0.0;
  for (Index k = 0; k < K; ++k) {
    auto [i, j] = cells_[static_cast<std::size_t>(k)];
    double const p = std::exp(ll[k] - best_ll) / z;
    out.loglike(i, j) = ll[k];
    out.probability(i, j) = p;
    m1 += p * grid_.t1_ms[i];
    m2 += p * grid_.t2_ms[j];
  }
  double v1 = 0.0, v2 = 0.0;
  for (Index k = 0; k < K; ++k) {
    auto [i, j] = cells_[static_cast<std::size_t>(k)];
    double const p = out.probability(i, j);
    v1 += p * (grid_.t1_ms[i] - m1) * (grid_.t1_ms[i] - m1);
    v2 += p * (grid_.t2_ms[j] - m2) * (grid_.t2_ms[j] - m2);
  }

  auto [bi, bj] = cells_[static_cast<std::size_t>(best)];
  out.argmax_i = bi;
  out.argmax_j = bj;
  PosteriorSummary &s = out.summary;
  s.mle_t1_ms = grid_.t1_ms[bi];
  s.mle_t2_ms = grid_.t2_ms[bj];
  s.mean_t1_ms = m1;
  s.mean_t2_ms = m2;
  s.std_t1_ms = std::sqrt(v1);
  s.std_t2_ms = std::sqrt(v2);
  s.pd_estimate = projections[best] / dict_.norms[best];
  s.max_loglike = best_ll;
  s.log_evidence = best_ll + std::log(z) - std::log(static_cast<double>(K));
  s.n_samples = K;
  return out;
}

GridPosterior grid_posterior(const CxVec &x, const SequenceDesign &design, const InferenceGrid &grid, double sigma) {
  return GridModel(design, grid).posterior(x, sigma);
}

InferenceMethod parse_inference_method(const std::string &name) {
  if (name == "grid") { return InferenceMethod::grid; }
  if (name == "tmcmc") { return InferenceMethod::tmcmc; }
  if (name == "dict") { return InferenceMethod::dict; }
  throw InvalidArgument("unknown inference method '" + name + "' (expected grid, tmcmc or dict)");
}

std::string to_string(InferenceMethod method) {
  switch (method) {
  case InferenceMethod::grid: return "grid";
  case InferenceMethod::tmcmc: return "tmcmc";
  case InferenceMethod::dict: return "dict";
  }
  return "?";
}

namespace {

std::vector<Index> masked_voxels(const U8_2 &mask, Index n_voxels) {
  if (mask.size() != 0 && mask.size() != n_voxels) { throw InvalidArgument("inference: mask shape mismatch"); }
  std::vector<Index> voxels;
  for (Index v = 0; v < n_voxels; ++v) {
    if (mask.size() == 0 || mask.data()[v]) { voxels.push_back(v); }
  }
  return voxels;
}

CxMat gather_series(const Cx3 &series, const std::vector<Index> &voxels, std::size_t begin, std::size_t end) {
  Index const T = series.dimension(0), N = series.dimension(1) * series.dimension(2);
  CxMat x(T, static_cast<Index>(end - begin));
  for (std::size_t b = begin; b < end; ++b) {
    for (Index t = 0; t < T; ++t) { x(t, static_cast<Index>(b - begin)) = series.data()[t * N + voxels[b]]; }
  }
  return x;
}

constexpr std::size_t kVoxelBlock = 256;

} // namespace

double estimate_sigma(const Cx3 &series, const Dictionary &dict, const U8_2 &mask) {
  Index const T = series.dimension(0), N = series.dimension(1) * series.dimension(2);
  if (T != dict.atoms.cols()) { throw InvalidArgument("estimate_sigma: series length mismatch"); }
  auto const voxels = masked_voxels(mask, N);
  if (voxels.empty()) { throw InvalidArgument("estimate_sigma: empty mask"); }
  std::vector<double> parts;
  parts.reserve(voxels.size() * static_cast<std::size_t>(2 * T));
  double power = 0.0;
  for (std::size_t b0 = 0; b0 < voxels.size(); b0 += kVoxelBlock) {
    std::size_t const b1 = std::min(voxels.size(), b0 + kVoxelBlock);
    CxMat const x = gather_series(series, voxels, b0, b1);
    CxMat const proj = dict.atoms.conjugate() * x;
    for (Index v = 0; v < x.cols(); ++v) {
      Index best = 0;
      proj.col(v).cwiseAbs().maxCoeff(&best);
      CxVec const r = x.col(v) - proj(best, v) * dict.atoms.row(best).transpose();
      power += x.col(v).squaredNorm();
      for (Index t = 0; t < T; ++t) {
        parts.push_back(r[t].real());
        parts.push_back(r[t].imag());
      }
    }
  }
  double const med = median_in_place(parts);
  for (double &p : parts) { p = std::abs(p - med); }
  double sigma = 1.4826 * median_in_place(parts);
  double const floor = 1e-9 * std::sqrt(power / static_cast<double>(voxels.size() * static_cast<std::size_t>(T)));
  if (!(sigma > floor)) {
    log::warn("estimate_sigma: residual MAD is ~0 (noiseless data?); using a floor value");
    sigma = std::max(floor, 1e-300);
  }
  return sigma;
}

ParameterMaps infer_maps(const Cx3 &series, const SequenceDesign &design, const InferenceGrid &grid,
                         const InferenceOptions &options, const U8_2 &mask, std::uint64_t seed) {
  Index const T = series.dimension(0), H = series.dimension(1), W = series.dimension(2), N = H * W;
  if (T != design.repetitions()) { throw InvalidArgument("infer_maps: series length differs from the design"); }
  auto const voxels = masked_voxels(mask, N);
  GridModel const model(design, grid);

  ParameterMaps maps;
  for (Re2 *m : {&maps.t1_ms, &maps.t2_ms, &maps.std_t1_ms, &maps.std_t2_ms}) {
    *m = Re2(H, W);
    m->setZero();
  }
  maps.pd = Cx2(H, W);
  maps.pd.setZero();
  if (voxels.empty()) { return maps; }
  maps.sigma = options.sigma > 0.0 ? options.sigma : estimate_sigma(series, model.dictionary(), mask);

  if (options.method == InferenceMethod::tmcmc) {
    SupportBounds support;
    support.t1_min_ms = grid.t1_ms[0];
    support.t1_max_ms = grid.t1_ms[grid.t1_ms.size() - 1];
    support.t2_min_ms = grid.t2_ms[0];
    support.t2_max_ms = grid.t2_ms[grid.t2_ms.size() - 1];
    // Voxels run sequentially; particles inside each run in parallel.
    for (Index v : voxels) {
      CxVec x(T);
      for (Index t = 0; t < T; ++t) { x[t] = series.data()[t * N + v]; }
      auto const r = tmcmc_sample(x, design, support, maps.sigma, options.tmcmc, stream_seed(seed, {static_cast<std::uint64_t>(v)}));
      maps.t1_ms.data()[v] = r.summary.mle_t1_ms;
      maps.t2_ms.data()[v] = r.summary.mle_t2_ms;
      maps.std_t1_ms.data()[v] = r.summary.std_t1_ms;
      maps.std_t2_ms.data()[v] = r.summary.std_t2_ms;
      maps.pd.data()[v] = r.summary.pd_estimate;
    }
    return maps;
  }

  const Dictionary &dict = model.dictionary();
  for (std::size_t b0 = 0; b0 < voxels.size(); b0 += kVoxelBlock) {
    std::size_t const b1 = std::min(voxels.size(), b0 + kVoxelBlock);
    CxMat const x = gather_series(series, voxels, b0, b1);
    CxMat const proj = dict.atoms.conjugate() * x;
    parallel_for(x.cols(), [&](Index col) {
      Index const v = voxels[b0 + static_cast<std::size_t>(col)];
      if (options.method == InferenceMethod::dict) {
        Index best = 0;
        double best_abs = -1.0;
        for (Index k = 0; k < proj.rows(); ++k) {
          if (double const a = std::abs(proj(k, col)); a > best_abs) {
            best_abs = a;
            best = k;
          }
        }
        maps.t1_ms.data()[v] = dict.params[static_cast<std::size_t>(best)].t1_ms;
        maps.t2_ms.data()[v] = dict.params[static_cast<std::size_t>(best)].t2_ms;
        // Scale relative to the unnormalised model so PD maps agree with grid.
        maps.pd.data()[v] = proj(best, col) / dict.norms[best];
        return;
      }
      auto const post = model.posterior_from_projections(proj.col(col), x.col(col).squaredNorm(), maps.sigma);
      maps.t1_ms.data()[v] = post.summary.mle_t1_ms;
      maps.t2_ms.data()[v] = post.summary.mle_t2_ms;
      maps.std_t1_ms.data()[v] = post.summary.std_t1_ms;
      maps.std_t2_ms.data()[v] = post.summary.std_t2_ms;
      maps.pd.data()[v] = post.summary.pd_estimate;
    });
  }
  return maps;
}

} // namespace qti
