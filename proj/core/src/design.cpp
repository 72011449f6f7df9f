#include "qti/design.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include <Eigen/Eigenvalues>

#include "qti/log.hpp"
#include "qti/parallel.hpp"

namespace qti {

TissuePrior TissuePrior::defaults(double sigma_fraction) {
  auto make = [&](std::string name, double t1, double t2, double mu) {
    return TissueClass{std::move(name), t1, t2, sigma_fraction * t1, sigma_fraction * t2, mu};
  };
  return TissuePrior{{make("GM", 1450.0, 85.0, 0.05), make("WM", 900.0, 60.0, 0.05),
                      make("CSF", 3600.0, 1750.0, 0.1), make("SB", 1740.0, 275.0, 0.3)}};
}

double TissuePrior::total_weight() const {
  return std::accumulate(classes.begin(), classes.end(), 0.0,
                         [](double acc, const TissueClass &c) { return acc + c.weight; });
}

void TissuePrior::validate() const {
  if (classes.empty()) { throw InvalidArgument("TissuePrior: no classes"); }
  for (auto const &c : classes) {
    if (c.weight < 0.0) { throw InvalidArgument("TissuePrior: negative weight for " + c.name); }
    if (!(c.sigma_t1_ms > 0.0) || !(c.sigma_t2_ms > 0.0)) {
      throw InvalidArgument("TissuePrior: sigmas must be > 0 for " + c.name);
    }
    TissueParams{c.mean_t1_ms, c.mean_t2_ms}.validate();
  }
  if (total_weight() > 1.0 + 1e-12) { throw InvalidArgument("TissuePrior: weights sum above 1"); }
}

std::vector<double> make_linear_ramp(double alpha_a_deg, double alpha_b_deg, Index repetitions) {
  if (repetitions < 2) { throw InvalidArgument("make_linear_ramp: need at least 2 repetitions"); }
  std::vector<double> ramp(static_cast<std::size_t>(repetitions));
  double const span = static_cast<double>(repetitions - 1);
  for (Index n = 0; n < repetitions; ++n) {
    // Written symmetrically so that swapping endpoints reverses the vector exactly.
    double const up = static_cast<double>(n), down = static_cast<double>(repetitions - 1 - n);
    ramp[static_cast<std::size_t>(n)] = (alpha_a_deg * down + alpha_b_deg * up) / span;
  }
  ramp.front() = alpha_a_deg;
  ramp.back() = alpha_b_deg;
  return ramp;
}

SequenceDesign DesignTemplate::with_ramp(double alpha_a_deg, double alpha_b_deg) const {
  SequenceDesign d;
  d.flip_angles_deg = make_linear_ramp(alpha_a_deg, alpha_b_deg, repetitions);
  d.tr_ms = tr_ms;
  d.te_ms = te_ms;
  d.invert = invert;
  d.inversion_gap_ms = inversion_gap_ms;
  d.slice_thickness_mm = slice_thickness_mm;
  return d;
}

SequenceDesign default_design() { return DesignTemplate{}.with_ramp(7.0, 70.0); }

CxMat signal_jacobian(const SequenceDesign &design, const TissueParams &params, double rel_step) {
  params.validate();
  if (!(rel_step > 0.0)) { throw InvalidArgument("signal_jacobian: step must be > 0"); }
  double h1 = rel_step * params.t1_ms;
  double h2 = rel_step * params.t2_ms;
  double const gap = params.t1_ms - params.t2_ms;
  if (h1 >= params.t2_ms || h2 >= params.t2_ms) {
    throw InvalidArgument("signal_jacobian: parameters not interior to the finite-difference stencil");
  }
  if (h1 > gap || h2 > gap) {
    if (!(gap > 0.0)) { throw InvalidArgument("signal_jacobian: T1 == T2 leaves no room for a central difference"); }
    double const scale = 0.5 * gap / std::max(h1, h2);
    h1 *= scale;
    h2 *= scale;
    log::warn("signal_jacobian: step shrunk to stay within T2 <= T1");
  }

  auto eval = [&](double t1, double t2) {
    TissueParams p = params;
    p.t1_ms = t1;
    p.t2_ms = t2;
    return simulate_with_flow(design, p);
  };
  CxMat J(design.repetitions(), 2);
  J.col(0) = (eval(params.t1_ms + h1, params.t2_ms) - eval(params.t1_ms - h1, params.t2_ms)) / (2.0 * h1);
  J.col(1) = (eval(params.t1_ms, params.t2_ms + h2) - eval(params.t1_ms, params.t2_ms - h2)) / (2.0 * h2);
  return J;
}

Eigen::Matrix2d fisher_matrix(const CxMat &jacobian) {
  if (jacobian.cols() != 2) { throw InvalidArgument("fisher_matrix: expected two parameter columns"); }
  if (!jacobian.allFinite()) { throw InvalidArgument("fisher_matrix: non-finite Jacobian"); }
  Eigen::Matrix2d I = (jacobian.adjoint() * jacobian).real();
  I(1, 0) = I(0, 1);
  return I;
}

double log_det_fisher(const Eigen::Matrix2d &fisher) {
  constexpr double floor = 1e-300;
  return std::log(std::max(fisher.determinant(), floor));
}

std::vector<TissueParams> sample_prior(const TissuePrior &prior, Index n_samples, std::uint64_t seed) {
  prior.validate();
  if (n_samples < 1) { throw InvalidArgument("sample_prior: need at least one sample"); }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, prior.classes.size() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<TissueParams> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  while (static_cast<Index>(out.size()) < n_samples) {
    auto const &c = prior.classes[pick(rng)];
    double const t1 = c.mean_t1_ms + c.sigma_t1_ms * normal(rng);
    double const t2 = c.mean_t2_ms + c.sigma_t2_ms * normal(rng);
    if (!(t2 > 0.0) || t2 > t1) { continue; }
    out.push_back(TissueParams{t1, t2, 1.0, 0.0});
  }
  return out;
}

std::vector<double> utility_samples(const SequenceDesign &design, const TissuePrior &prior, Index n_samples,
                                    std::uint64_t seed) {
  auto const draws = sample_prior(prior, n_samples, seed);
  std::vector<double> u;
  u.reserve(draws.size());
  for (auto const &p : draws) { u.push_back(log_det_fisher(fisher_matrix(signal_jacobian(design, p)))); }
  return u;
}

double expected_utility(const SequenceDesign &design, const TissuePrior &prior, Index n_samples, std::uint64_t seed) {
  auto const u = utility_samples(design, prior, n_samples, seed);
  return std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(u.size());
}

std::vector<double> class_contrast(const SequenceDesign &design, const TissuePrior &prior) {
  Index const C = static_cast<Index>(prior.classes.size());
  if (C < 2) { throw InvalidArgument("class_contrast: need at least two classes"); }
  std::vector<CxVec> signals;
  signals.reserve(prior.classes.size());
  for (auto const &c : prior.classes) {
    signals.push_back(simulate_transient(design, TissueParams{c.mean_t1_ms, c.mean_t2_ms, 1.0, 0.0}));
  }
  Index const T = design.repetitions();
  std::vector<double> gamma(static_cast<std::size_t>(C), 0.0);
  for (Index c = 0; c < C; ++c) {
    double best = 0.0;
    for (Index t = 0; t < T; ++t) {
      double nearest = std::numeric_limits<double>::infinity();
      for (Index d = 0; d < C; ++d) {
        if (d == c) { continue; }
        nearest = std::min(nearest, std::abs(signals[c][t] - signals[d][t]));
      }
      best = std::max(best, nearest);
    }
    gamma[static_cast<std::size_t>(c)] = best;
  }
  return gamma;
}

Normalizers Normalizers::from_terms(const std::vector<RawTerms> &terms) {
  if (terms.empty()) { throw InvalidArgument("Normalizers: no terms"); }
  Normalizers n;
  std::size_t const C = terms.front().contrast.size();
  n.utility_min = n.utility_max = terms.front().utility;
  n.contrast_min = n.contrast_max = terms.front().contrast;
  for (auto const &t : terms) {
    if (t.contrast.size() != C) { throw InvalidArgument("Normalizers: inconsistent class count"); }
    n.utility_min = std::min(n.utility_min, t.utility);
    n.utility_max = std::max(n.utility_max, t.utility);
    for (std::size_t c = 0; c < C; ++c) {
      n.contrast_min[c] = std::min(n.contrast_min[c], t.contrast[c]);
      n.contrast_max[c] = std::max(n.contrast_max[c], t.contrast[c]);
    }
  }
  return n;
}

RawTerms raw_terms(const SequenceDesign &design, const TissuePrior &prior, Index n_samples, std::uint64_t seed) {
  return RawTerms{expected_utility(design, prior, n_samples, seed), class_contrast(design, prior)};
}

namespace {
double min_max(double v, double lo, double hi) {
  if (!(hi > lo)) { return 0.0; }
  return (v - lo) / (hi - lo);
}
} // namespace

CostBreakdown combine_terms(const RawTerms &raw, const Normalizers &norm, const TissuePrior &prior) {
  std::size_t const C = prior.classes.size();
  if (raw.contrast.size() != C || norm.contrast_min.size() != C || norm.contrast_max.size() != C) {
    throw InvalidArgument("combine_terms: class count mismatch");
  }
  CostBreakdown b;
  b.utility_raw = raw.utility;
  b.utility_norm = min_max(raw.utility, norm.utility_min, norm.utility_max);
  b.contrast_raw = raw.contrast;
  b.contrast_norm.resize(C);
  double mixed = (1.0 - prior.total_weight()) * b.utility_norm;
  for (std::size_t c = 0; c < C; ++c) {
    b.contrast_norm[c] = min_max(raw.contrast[c], norm.contrast_min[c], norm.contrast_max[c]);
    mixed += prior.classes[c].weight * b.contrast_norm[c];
  }
  b.total_cost = -mixed;
  return b;
}

CostBreakdown cost(const SequenceDesign &design, const TissuePrior &prior, Index n_samples, std::uint64_t seed,
                   const Normalizers &norm) {
  return combine_terms(raw_terms(design, prior, n_samples, seed), norm, prior);
}

namespace {
std::vector<double> axis_points(AngleRange r, double step) {
  if (!(step > 0.0)) { throw InvalidArgument("grid_search: step must be > 0"); }
  if (r.hi < r.lo) { throw InvalidArgument("grid_search: empty angle range"); }
  Index const n = static_cast<Index>(std::floor((r.hi - r.lo) / step + 1e-9)) + 1;
  std::vector<double> pts;
  for (Index i = 0; i < n; ++i) { pts.push_back(r.lo + static_cast<double>(i) * step); }
  return pts;
}
} // namespace

GridSearchResult grid_search(const TissuePrior &prior, AngleRange alpha_a, AngleRange alpha_b, double step_deg,
                             std::uint64_t seed, const GridSearchOptions &options) {
  prior.validate();
  std::vector<DesignCandidate> candidates;
  for (double a : axis_points(alpha_a, step_deg)) {
    for (double b : axis_points(alpha_b, step_deg)) {
      if (a > 0.0 && a <= b && b <= 90.0) { candidates.push_back({a, b}); }
    }
  }
  if (candidates.empty()) { throw InvalidArgument("grid_search: no feasible candidate with 0 < alpha_a <= alpha_b <= 90"); }

  std::vector<RawTerms> raw(candidates.size());
  parallel_for(static_cast<Index>(candidates.size()), [&](Index i) {
    auto const &c = candidates[static_cast<std::size_t>(i)];
    raw[static_cast<std::size_t>(i)] =
      raw_terms(options.timing.with_ramp(c.alpha_a_deg, c.alpha_b_deg), prior, options.n_samples, seed);
  });

  Normalizers const norm = Normalizers::from_terms(raw);
  GridSearchResult result;
  for (auto const &c : prior.classes) { result.class_names.push_back(c.name); }
  result.cells.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    result.cells.push_back({candidates[i], combine_terms(raw[i], norm, prior)});
  }
  result.ranking.resize(candidates.size());
  std::iota(result.ranking.begin(), result.ranking.end(), Index{0});
  std::stable_sort(result.ranking.begin(), result.ranking.end(), [&](Index l, Index r) {
    return result.cells[static_cast<std::size_t>(l)].cost.total_cost <
           result.cells[static_cast<std::size_t>(r)].cost.total_cost;
  });
  result.best = result.ranking.front();
  return result;
}

void write_landscape_csv(std::ostream &out, const GridSearchResult &result) {
  out << "alpha_a_deg,alpha_b_deg,utility_raw,utility_norm";
  for (auto name : result.class_names) {
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::tolower(ch); });
    out << ",contrast_" << name;
  }
  out << ",total_cost\n";
  auto const old_precision = out.precision(12);
  for (auto const &cell : result.cells) {
    out << cell.candidate.alpha_a_deg << ',' << cell.candidate.alpha_b_deg << ',' << cell.cost.utility_raw << ','
        << cell.cost.utility_norm;
    for (double g : cell.cost.contrast_raw) { out << ',' << g; }
    out << ',' << cell.cost.total_cost << '\n';
  }
  out.precision(old_precision);
}

} // namespace qti
