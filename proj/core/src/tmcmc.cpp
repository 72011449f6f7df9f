#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <random>

#include "qti/inference.hpp"
#include "qti/log.hpp"
#include "qti/parallel.hpp"
#include "qti/random.hpp"

namespace qti {

bool SupportBounds::contains(double t1, double t2) const {
  if (!(t1 >= t1_min_ms && t1 <= t1_max_ms && t2 >= t2_min_ms && t2 <= t2_max_ms)) { return false; }
  return !constrain_t2_le_t1 || t2 <= t1;
}

void SupportBounds::validate() const {
  if (!(t1_min_ms > 0.0 && t1_max_ms > t1_min_ms && t2_min_ms > 0.0 && t2_max_ms > t2_min_ms)) {
    throw InvalidArgument("SupportBounds: need 0 < min < max on both axes");
  }
  if (constrain_t2_le_t1 && t2_min_ms >= t1_max_ms) { throw InvalidArgument("SupportBounds: empty T2 <= T1 region"); }
}

namespace {

constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kResampleStream = ~std::uint64_t{0};

struct WeightStats {
  double cov = 0.0;
  double log_mean = 0.0; // log mean of exp(db * (L - Lmax))
};

WeightStats weight_stats(const RealVec &ll, double lmax, double db) {
  double s = 0.0, s2 = 0.0;
  for (Index i = 0; i < ll.size(); ++i) {
    double const w = std::isfinite(ll[i]) ? std::exp(db * (ll[i] - lmax)) : 0.0;
    s += w;
    s2 += w * w;
  }
  double const n = static_cast<double>(ll.size());
  double const mean = s / n;
  double const var = std::max(0.0, s2 / n - mean * mean);
  return {mean > 0.0 ? std::sqrt(var) / mean : std::numeric_limits<double>::infinity(), std::log(mean)};
}

} // namespace

TmcmcResult tmcmc(const LogLikelihood &loglike, const SupportBounds &support, const TmcmcOptions &options,
                  std::uint64_t seed) {
  support.validate();
  if (options.n_particles < 100) { throw InvalidArgument("tmcmc: need at least 100 particles"); }
  if (!(options.proposal_scale > 0.0) || !(options.target_cov > 0.0) || options.mh_steps < 1 || options.max_stages < 1) {
    throw InvalidArgument("tmcmc: invalid options");
  }
  Index const n = options.n_particles;
  RealMat theta(n, 2);
  RealVec ll(n);

  std::vector<double> best_ll_per(static_cast<std::size_t>(n), -std::numeric_limits<double>::infinity());
  RealMat best_theta_per(n, 2);

  parallel_for(n, [&](Index i) {
    std::mt19937_64 rng = make_stream(seed, {kInitStream, static_cast<std::uint64_t>(i)});
    std::uniform_real_distribution<double> u1(support.t1_min_ms, support.t1_max_ms);
    std::uniform_real_distribution<double> u2(support.t2_min_ms, support.t2_max_ms);
    double t1 = 0.0, t2 = 0.0;
    do {
      t1 = u1(rng);
      t2 = u2(rng);
    } while (!support.contains(t1, t2));
    theta(i, 0) = t1;
    theta(i, 1) = t2;
    ll[i] = loglike(t1, t2);
    best_ll_per[static_cast<std::size_t>(i)] = ll[i];
    best_theta_per.row(i) = theta.row(i);
  });

  TmcmcResult result;
  double beta = 0.0;
  result.betas.push_back(beta);
  Eigen::Vector2d const floor_sd(1e-6 * (support.t1_max_ms - support.t1_min_ms),
                                 1e-6 * (support.t2_max_ms - support.t2_min_ms));

  for (Index stage = 1; beta < 1.0; ++stage) {
    double const lmax = ll.maxCoeff();
    if (!std::isfinite(lmax)) { throw NumericalError("tmcmc: all particle weights are degenerate (-inf likelihood)"); }
    double db = 1.0 - beta;
    if (stage >= options.max_stages) {
      log::warn("tmcmc: stage limit reached; jumping to beta = 1");
    } else if (weight_stats(ll, lmax, db).cov > options.target_cov) {
      double lo = 0.0, hi = db;
      for (int it = 0; it < 100; ++it) {
        double const mid = 0.5 * (lo + hi);
        (weight_stats(ll, lmax, mid).cov > options.target_cov ? hi : lo) = mid;
      }
      db = std::max(lo, 1e-12);
      if (beta + db >= 1.0) { db = 1.0 - beta; }
    }
    double const beta_new = (db >= 1.0 - beta) ? 1.0 : beta + db;
    db = beta_new - beta;
    auto const ws = weight_stats(ll, lmax, db);
    result.log_evidence += ws.log_mean + db * lmax;

    std::vector<double> w(static_cast<std::size_t>(n));
    double wsum = 0.0;
    for (Index i = 0; i < n; ++i) {
      w[static_cast<std::size_t>(i)] = std::isfinite(ll[i]) ? std::exp(db * (ll[i] - lmax)) : 0.0;
      wsum += w[static_cast<std::size_t>(i)];
    }
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (Index i = 0; i < n; ++i) { mean += (w[static_cast<std::size_t>(i)] / wsum) * theta.row(i).transpose(); }
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (Index i = 0; i < n; ++i) {
      Eigen::Vector2d const d = theta.row(i).transpose() - mean;
      cov += (w[static_cast<std::size_t>(i)] / wsum) * d * d.transpose();
    }
    cov *= options.proposal_scale * options.proposal_scale;
    cov.diagonal() += floor_sd.cwiseProduct(floor_sd);
    Eigen::Matrix2d const chol = Eigen::LLT<Eigen::Matrix2d>(cov).matrixL();

    std::vector<Index> parent(static_cast<std::size_t>(n));
    {
      std::mt19937_64 rng = make_stream(seed, {static_cast<std::uint64_t>(stage), kResampleStream});
      std::discrete_distribution<Index> pick(w.begin(), w.end());
      for (auto &p : parent) { p = pick(rng); }
    }
    RealMat next(n, 2);
    RealVec next_ll(n);
    parallel_for(n, [&](Index i) {
      std::mt19937_64 rng = make_stream(seed, {static_cast<std::uint64_t>(stage), static_cast<std::uint64_t>(i)});
      std::normal_distribution<double> gauss(0.0, 1.0);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      Index const p = parent[static_cast<std::size_t>(i)];
      Eigen::Vector2d cur = theta.row(p).transpose();
      double cur_ll = ll[p];
      auto &best = best_ll_per[static_cast<std::size_t>(i)];
      for (Index step = 0; step < options.mh_steps; ++step) {
        double const g0 = gauss(rng);
        double const g1 = gauss(rng);
        Eigen::Vector2d const prop = cur + chol * Eigen::Vector2d(g0, g1);
        double const u = unif(rng);
        if (!support.contains(prop[0], prop[1])) { continue; }
        double const prop_ll = loglike(prop[0], prop[1]);
        if (prop_ll > best) {
          best = prop_ll;
          best_theta_per.row(i) = prop.transpose();
        }
        double const log_ratio = beta_new * (prop_ll - cur_ll);
        if (std::isfinite(prop_ll) && (!std::isfinite(cur_ll) || std::log(u) < log_ratio)) {
          cur = prop;
          cur_ll = prop_ll;
        }
      }
      next.row(i) = cur.transpose();
      next_ll[i] = cur_ll;
    });
    theta = std::move(next);
    ll = std::move(next_ll);
    beta = beta_new;
    result.betas.push_back(beta);
  }

  PosteriorSummary &s = result.summary;
  Index best_i = 0;
  for (Index i = 1; i < n; ++i) {
    if (best_ll_per[static_cast<std::size_t>(i)] > best_ll_per[static_cast<std::size_t>(best_i)]) { best_i = i; }
  }
  s.mle_t1_ms = best_theta_per(best_i, 0);
  s.mle_t2_ms = best_theta_per(best_i, 1);
  s.max_loglike = best_ll_per[static_cast<std::size_t>(best_i)];
  Eigen::Vector2d const mean = theta.colwise().mean().transpose();
  s.mean_t1_ms = mean[0];
  s.mean_t2_ms = mean[1];
  s.std_t1_ms = std::sqrt((theta.col(0).array() - mean[0]).square().mean());
  s.std_t2_ms = std::sqrt((theta.col(1).array() - mean[1]).square().mean());
  s.n_samples = n;
  result.samples = std::move(theta);
  result.loglike = std::move(ll);
  return result;
}

TmcmcResult tmcmc_sample(const CxVec &x, const SequenceDesign &design, const SupportBounds &support, double sigma,
                         const TmcmcOptions &options, std::uint64_t seed) {
  design.validate();
  if (x.size() != design.repetitions()) { throw InvalidArgument("tmcmc_sample: series length differs from the design"); }
  LogLikelihood const ll = [&](double t1, double t2) {
    return profile_loglike(x, design, TissueParams{t1, t2, 1.0, 0.0}, sigma).loglike;
  };
  TmcmcResult r = tmcmc(ll, support, options, seed);
  r.summary.pd_estimate =
    profile_loglike(x, design, TissueParams{r.summary.mle_t1_ms, r.summary.mle_t2_ms, 1.0, 0.0}, sigma).pd_hat;
  return r;
}

} // namespace qti
