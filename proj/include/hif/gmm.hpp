#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "hif/autodiff.hpp"
#include "hif/errors.hpp"
#include "hif/rng.hpp"
#include "hif/tensor.hpp"

namespace hif {

namespace linalg {

/// In-place lower Cholesky of a symmetric positive-definite matrix.
/// Returns false when a pivot is not positive.
inline bool cholesky(const Tensor& a, Tensor& l) {
  const std::size_t d = a.rows();
  l = Tensor::zeros({d, d});
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = a.at(i, j);
      for (std::size_t k = 0; k < j; ++k) sum -= l.at(i, k) * l.at(j, k);
      if (i == j) {
        if (sum <= 0.0) return false;
        l.at(i, i) = std::sqrt(sum);
      } else {
        l.at(i, j) = sum / l.at(j, j);
      }
    }
  }
  return true;
}

/// Solves L y = b for lower-triangular L.
inline void forward_solve(const Tensor& l, const std::vector<double>& b, std::vector<double>& y) {
  const std::size_t d = l.rows();
  y.assign(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    double sum = b[i];
    for (std::size_t k = 0; k < i; ++k) sum -= l.at(i, k) * y[k];
    y[i] = sum / l.at(i, i);
  }
}

}  // namespace linalg

/// Full-covariance Gaussian mixture over joint latents; responsibilities act
/// as fuzzy cluster memberships.
struct FuzzyClustering {
  std::size_t j = 0;
  std::size_t dim = 0;
  std::vector<Tensor> means;          // j vectors [dim]
  std::vector<Tensor> cholesky;       // j lower factors [dim x dim] of Sigma
  std::vector<double> weights;        // simplex over j
  std::vector<double> loglik_trace;   // accepted per-iteration log-likelihoods
  std::uint64_t seed = 0;

  /// log N(x | mean_c, Sigma_c) via the stored Cholesky factor.
  double log_density(std::size_t c, const std::vector<double>& x) const {
    const Tensor& l = cholesky[c];
    std::vector<double> diff(dim);
    for (std::size_t i = 0; i < dim; ++i) diff[i] = x[i] - means[c].data[i];
    std::vector<double> y;
    linalg::forward_solve(l, diff, y);
    double quad = 0.0, logdet = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      quad += y[i] * y[i];
      logdet += std::log(l.at(i, i));
    }
    return -0.5 * (static_cast<double>(dim) * std::log(2.0 * 3.141592653589793) + quad) - logdet;
  }
};

struct MembershipVector {
  std::string thread_id;
  std::vector<double> p;  // simplex over j
};

namespace detail {

// Linear shrinkage toward the isotropic covariance tr(S)/d * I. With fewer
// samples than dimensions a raw sample covariance is rank-deficient; its
// near-zero eigenvalues make component log-determinants collapse and EM then
// freezes whatever partition the initialization happened to give. Shrinkage
// intensity d/(d+n_k) fades out when a component has plenty of support.
inline Tensor shrink_covariance(Tensor cov, double support) {
  const std::size_t d = cov.rows();
  if (support <= 0.0) return cov;
  const double shrink = static_cast<double>(d) / (static_cast<double>(d) + support);
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) trace += cov.at(i, i);
  const double iso = trace / static_cast<double>(d);
  for (auto& v : cov.data) v *= 1.0 - shrink;
  for (std::size_t i = 0; i < d; ++i) cov.at(i, i) += shrink * iso;
  return cov;
}

inline Tensor regularized_cholesky(Tensor cov, double eps) {
  const std::size_t d = cov.rows();
  for (std::size_t i = 0; i < d; ++i) cov.at(i, i) += eps;
  Tensor l;
  double jitter = eps;
  while (!linalg::cholesky(cov, l)) {
    // Escalate only if the fixed regularizer is numerically insufficient.
    jitter *= 10.0;
    for (std::size_t i = 0; i < d; ++i) cov.at(i, i) += jitter;
    if (jitter > 1e3) throw TrainingError("gmm: covariance not positive definite");
  }
  return l;
}

}  // namespace detail

/// EM fit with full covariances, seeded kmeans++-style initialization, and
/// epsilon*I covariance regularization each M-step. The log-likelihood trace
/// records accepted iterations only; a step that would lower it (possible
/// near convergence because of the regularizer) reverts and stops.
inline FuzzyClustering fit_gmm(const Tensor& x, std::size_t j, std::uint64_t seed,
                               double tol = 1e-6, std::size_t max_iter = 200,
                               double eps = 1e-6) {
  if (x.shape.size() != 2) throw ConfigError("fit_gmm: X must be a matrix");
  const std::size_t s = x.rows(), d = x.cols();
  if (j < 1) throw ConfigError("fit_gmm: j must be >= 1");
  if (s < j) throw DataError("fit_gmm: need at least j samples (s=" + std::to_string(s) +
                             ", j=" + std::to_string(j) + ")");
  for (double v : x.data) {
    if (!std::isfinite(v)) throw DataError("fit_gmm: non-finite input");
  }

  FuzzyClustering model;
  model.j = j;
  model.dim = d;
  model.seed = seed;
  Rng rng(seed);

  auto point = [&](std::size_t p) {
    std::vector<double> v(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = x.at(p, i);
    return v;
  };

  // kmeans++-style center sampling.
  std::vector<std::size_t> centers;
  centers.push_back(rng.index(s));
  std::vector<double> dist2(s, std::numeric_limits<double>::max());
  while (centers.size() < j) {
    const std::size_t last = centers.back();
    double total = 0.0;
    for (std::size_t p = 0; p < s; ++p) {
      double dd = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double diff = x.at(p, i) - x.at(last, i);
        dd += diff * diff;
      }
      dist2[p] = std::min(dist2[p], dd);
      total += dist2[p];
    }
    double r = rng.uniform() * total;
    std::size_t pick = s - 1;
    for (std::size_t p = 0; p < s; ++p) {
      r -= dist2[p];
      if (r <= 0.0) {
        pick = p;
        break;
      }
    }
    centers.push_back(pick);
  }

  // Global covariance for the initial component shapes.
  std::vector<double> mean(d, 0.0);
  for (std::size_t p = 0; p < s; ++p) {
    for (std::size_t i = 0; i < d; ++i) mean[i] += x.at(p, i);
  }
  for (auto& m : mean) m /= static_cast<double>(s);
  Tensor global_cov = Tensor::zeros({d, d});
  for (std::size_t p = 0; p < s; ++p) {
    for (std::size_t i = 0; i < d; ++i) {
      const double di = x.at(p, i) - mean[i];
      for (std::size_t k = 0; k <= i; ++k) {
        global_cov.at(i, k) += di * (x.at(p, k) - mean[k]);
      }
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = 0; k <= i; ++k) {
      global_cov.at(i, k) /= static_cast<double>(s);
      global_cov.at(k, i) = global_cov.at(i, k);
    }
  }

  for (std::size_t c = 0; c < j; ++c) {
    model.means.push_back(Tensor({d}, point(centers[c])));
    model.cholesky.push_back(detail::regularized_cholesky(
        detail::shrink_covariance(global_cov, static_cast<double>(s) / static_cast<double>(j)),
        eps));
    model.weights.push_back(1.0 / static_cast<double>(j));
  }

  std::vector<std::vector<double>> resp(s, std::vector<double>(j));
  std::vector<double> point_loglik(s);
  FuzzyClustering previous = model;
  double prev_ll = -std::numeric_limits<double>::max();

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    // E-step (log space).
    double ll = 0.0;
    for (std::size_t p = 0; p < s; ++p) {
      std::vector<double> lp(j);
      const auto xp = point(p);
      for (std::size_t c = 0; c < j; ++c) {
        lp[c] = std::log(model.weights[c]) + model.log_density(c, xp);
      }
      const double lse = Tape::logsumexp(lp);
      point_loglik[p] = lse;
      ll += lse;
      for (std::size_t c = 0; c < j; ++c) resp[p][c] = std::exp(lp[c] - lse);
    }

    if (ll < prev_ll) {
      model = previous;  // regularized step overshot; keep the better fit
      break;
    }
    model.loglik_trace.push_back(ll);
    const bool converged = iter > 0 && ll - prev_ll < tol;
    prev_ll = ll;
    if (converged) break;
    previous = model;

    // M-step.
    for (std::size_t c = 0; c < j; ++c) {
      double nk = 0.0;
      for (std::size_t p = 0; p < s; ++p) nk += resp[p][c];
      if (nk < 0.1) {
        // Dead component: re-seed at the point the mixture fits worst.
        std::size_t worst = 0;
        for (std::size_t p = 1; p < s; ++p) {
          if (point_loglik[p] < point_loglik[worst]) worst = p;
        }
        model.means[c] = Tensor({d}, point(worst));
        model.cholesky[c] = detail::regularized_cholesky(
            detail::shrink_covariance(global_cov, static_cast<double>(s) / static_cast<double>(j)),
            eps);
        model.weights[c] = 1.0 / static_cast<double>(s);
        continue;
      }
      std::vector<double> mu(d, 0.0);
      for (std::size_t p = 0; p < s; ++p) {
        for (std::size_t i = 0; i < d; ++i) mu[i] += resp[p][c] * x.at(p, i);
      }
      for (auto& m : mu) m /= nk;
      Tensor cov = Tensor::zeros({d, d});
      for (std::size_t p = 0; p < s; ++p) {
        const double r = resp[p][c];
        if (r == 0.0) continue;
        for (std::size_t i = 0; i < d; ++i) {
          const double di = x.at(p, i) - mu[i];
          for (std::size_t k = 0; k <= i; ++k) {
            cov.at(i, k) += r * di * (x.at(p, k) - mu[k]);
          }
        }
      }
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t k = 0; k <= i; ++k) {
          cov.at(i, k) /= nk;
          cov.at(k, i) = cov.at(i, k);
        }
      }
      model.means[c] = Tensor({d}, std::move(mu));
      model.cholesky[c] = detail::regularized_cholesky(detail::shrink_covariance(cov, nk), eps);
      model.weights[c] = nk / static_cast<double>(s);
    }
    // Renormalize weights (re-seeded components perturb the simplex slightly).
    double wsum = 0.0;
    for (double w : model.weights) wsum += w;
    for (auto& w : model.weights) w /= wsum;
  }
  return model;
}

/// Posterior responsibilities for a single point, computed in log space.
inline MembershipVector membership(const FuzzyClustering& model, const std::vector<double>& x) {
  if (x.size() != model.dim) throw std::invalid_argument("membership: dimension mismatch");
  std::vector<double> lp(model.j);
  for (std::size_t c = 0; c < model.j; ++c) {
    lp[c] = std::log(model.weights[c]) + model.log_density(c, x);
  }
  const double lse = Tape::logsumexp(lp);
  MembershipVector m;
  m.p.resize(model.j);
  for (std::size_t c = 0; c < model.j; ++c) m.p[c] = std::exp(lp[c] - lse);
  return m;
}

/// Prior knowledge: membership-weighted sum of cluster centres.
inline std::vector<double> prior_knowledge(const FuzzyClustering& model,
                                           const std::vector<double>& p_star) {
  if (p_star.size() != model.j) throw std::invalid_argument("prior_knowledge: wrong length");
  double sum = 0.0;
  for (double v : p_star) {
    if (v < -1e-6) throw std::invalid_argument("prior_knowledge: negative membership");
    sum += v;
  }
  if (std::fabs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("prior_knowledge: memberships must sum to 1");
  }
  std::vector<double> xc(model.dim, 0.0);
  for (std::size_t c = 0; c < model.j; ++c) {
    for (std::size_t i = 0; i < model.dim; ++i) xc[i] += model.means[c].data[i] * p_star[c];
  }
  return xc;
}

}  // namespace hif
