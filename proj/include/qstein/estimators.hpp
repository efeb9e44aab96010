#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "qstein/parallel.hpp"
#include "qstein/qgauss.hpp"
#include "qstein/sampler.hpp"
#include "qstein/testfn.hpp"

namespace qstein {

// An MC estimate together with its empirical spread and (when C1/C2 bounds of
// the test function are known) the a-priori per-entry variance bound.  value
// is D x 1 for gradient-type estimates, D x D for Hessian-type ones.
struct GradEstimate {
  Eigen::MatrixXd value;
  Eigen::MatrixXd per_entry_variance;       // unbiased, across the S contributions
  std::optional<double> variance_bound;     // bound on Var of the S-sample mean, per entry
  std::optional<double> frobenius_bound;    // aggregate bound for Hessian estimates
  std::size_t S = 0;
  std::uint64_t seed = 0;
  std::string estimator;

  Eigen::MatrixXd stderr_of_mean() const {
    return (per_entry_variance / static_cast<double>(S)).cwiseSqrt();
  }
};

namespace detail {

// Deterministic blockwise mean/variance of S matrix-valued contributions.
// Fixed block size + in-order combine: the result is independent of the
// worker count, bit for bit.
template <class ContribFn>
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> mean_var(std::size_t S, int rows, int cols,
                                                            ContribFn contrib) {
  struct Acc {
    Eigen::MatrixXd sum, sumsq;
  };
  Acc zero{Eigen::MatrixXd::Zero(rows, cols), Eigen::MatrixXd::Zero(rows, cols)};
  Acc total = block_reduce<Acc>(
      S, 4096, zero,
      [&](std::size_t lo, std::size_t hi) {
        Acc a{Eigen::MatrixXd::Zero(rows, cols), Eigen::MatrixXd::Zero(rows, cols)};
        for (std::size_t k = lo; k < hi; ++k) {
          const Eigen::MatrixXd c = contrib(k);
          a.sum += c;
          a.sumsq += c.cwiseProduct(c);
        }
        return a;
      },
      [](Acc a, Acc b) {
        a.sum += b.sum;
        a.sumsq += b.sumsq;
        return a;
      });
  const double n = static_cast<double>(S);
  Eigen::MatrixXd mean = total.sum / n;
  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(rows, cols);
  if (S > 1)
    var = ((total.sumsq - n * mean.cwiseProduct(mean)) / (n - 1.0)).cwiseMax(0.0);
  return {std::move(mean), std::move(var)};
}

inline void require_source(const SampleBatch& batch, Source expected, const char* who) {
  if (batch.source != expected)
    throw std::invalid_argument(std::string(who) + ": batch drawn from the wrong law");
}

}  // namespace detail

struct MeanSE {
  Eigen::VectorXd value;
  Eigen::VectorXd se;
};

// E_p[(x - mu) f(x)] from a base-law batch.
inline MeanSE stein_lhs_stats(const QGaussian& p, const TestFunction& f, const SampleBatch& batch) {
  detail::require_source(batch, Source::base, "stein_lhs");
  const int D = p.dim();
  auto [mean, var] = detail::mean_var(batch.points.rows(), D, 1, [&](std::size_t k) {
    const Eigen::VectorXd x = batch.points.row(k).transpose();
    return Eigen::MatrixXd((x - p.mu) * f.eval(x));
  });
  const double S = static_cast<double>(batch.points.rows());
  return {mean.col(0), Eigen::VectorXd((var / S).cwiseSqrt())};
}

inline Eigen::VectorXd stein_lhs(const QGaussian& p, const TestFunction& f,
                                 const SampleBatch& batch) {
  return stein_lhs_stats(p, f, batch).value;
}

enum class SteinVariant {
  escort_batch,       // Cov_p(x) * mean of grad f over an escort batch
  p_only_reweighted,  // Cov_p(x) * mean of (R^2 - s) grad f / M over a base batch
};

inline MeanSE stein_rhs_stats(const QGaussian& p, const TestFunction& f, SteinVariant variant,
                              const SampleBatch& batch) {
  const int D = p.dim();
  const Moments mo = moments(p);
  const Eigen::MatrixXd cov = mo.cov_scale * sigma_of(p);
  const bool reweight = variant == SteinVariant::p_only_reweighted && !p.gaussian;
  if (variant == SteinVariant::escort_batch)
    detail::require_source(batch, Source::escort, "stein_rhs(escort_batch)");
  else
    detail::require_source(batch, Source::base, "stein_rhs(p_only_reweighted)");

  auto [mean, var] = detail::mean_var(batch.points.rows(), D, 1, [&](std::size_t k) {
    const Eigen::VectorXd x = batch.points.row(k).transpose();
    double w = 1.0;
    if (reweight) w = (p.r2 - batch.s_values(k)) / mo.M;
    return Eigen::MatrixXd(cov * (w * f.grad(x)));
  });
  const double S = static_cast<double>(batch.points.rows());
  return {mean.col(0), Eigen::VectorXd((var / S).cwiseSqrt())};
}

inline Eigen::VectorXd stein_rhs(const QGaussian& p, const TestFunction& f, SteinVariant variant,
                                 const SampleBatch& batch) {
  return stein_rhs_stats(p, f, variant, batch).value;
}

// Location gradient of E_p[f]: plain mean of grad f over a base batch — the
// bounded-support analogue of Bonnet's theorem has unit weights.
inline GradEstimate grad_mu(const QGaussian& p, const TestFunction& f, std::size_t S,
                            std::uint64_t seed) {
  if (!f.grad) throw std::invalid_argument("grad_mu: f.grad missing");
  const SampleBatch batch = sample(p, S, seed, Source::base);
  GradEstimate est;
  std::tie(est.value, est.per_entry_variance) =
      detail::mean_var(S, p.dim(), 1, [&](std::size_t k) {
        return Eigen::MatrixXd(f.grad(batch.points.row(k).transpose()));
      });
  est.S = S;
  est.seed = seed;
  est.estimator = "grad_mu";
  return est;
}

// Scale gradient of E_p[f]: (E_p[s]/D) * (1/2) * mean of hess f over an
// escort batch; exactly symmetric by construction.
inline GradEstimate grad_sigma(const QGaussian& p, const TestFunction& f, std::size_t S,
                               std::uint64_t seed) {
  if (!f.hess) throw std::invalid_argument("grad_sigma: f.hess missing");
  const SampleBatch batch = sample(p, S, seed, Source::escort);
  const Moments mo = moments(p);
  const double scale = 0.5 * mo.cov_scale;  // (E_p[s]/D) / 2
  GradEstimate est;
  std::tie(est.value, est.per_entry_variance) =
      detail::mean_var(S, p.dim(), p.dim(), [&](std::size_t k) {
        return Eigen::MatrixXd(scale * f.hess(batch.points.row(k).transpose()));
      });
  est.value = 0.5 * (est.value + est.value.transpose()).eval();
  est.S = S;
  est.seed = seed;
  est.estimator = "grad_sigma";
  return est;
}

enum class Prop1Kind { grad, hess };

// Reweighted base-law estimators of escort expectations:
//   g_hat = mean (R^2 - s(x_k)) grad t(x_k) / M,
//   H_hat = mean (R^2 - s(x_k)) hess f(x_k) / M,
// with per-entry variance bound (1/S) (R^2 C / M)^2 when the sup bound C is
// known, and the D^2-scaled Frobenius aggregate for H_hat.
inline GradEstimate prop1_estimators(const QGaussian& p, const TestFunction& f, std::size_t S,
                                     std::uint64_t seed, Prop1Kind which) {
  if (p.gaussian)
    throw std::domain_error("prop1_estimators: requires bounded support (q < 1)");
  const bool grad_kind = which == Prop1Kind::grad;
  if (grad_kind && !f.grad) throw std::invalid_argument("prop1_estimators: f.grad missing");
  if (!grad_kind && !f.hess) throw std::invalid_argument("prop1_estimators: f.hess missing");

  const SampleBatch batch = sample(p, S, seed, Source::base);
  const Moments mo = moments(p);
  const int D = p.dim();
  GradEstimate est;
  std::tie(est.value, est.per_entry_variance) =
      detail::mean_var(S, D, grad_kind ? 1 : D, [&](std::size_t k) {
        const Eigen::VectorXd x = batch.points.row(k).transpose();
        const double w = (p.r2 - batch.s_values(k)) / mo.M;
        if (grad_kind) return Eigen::MatrixXd(w * f.grad(x));
        return Eigen::MatrixXd(w * f.hess(x));
      });
  est.S = S;
  est.seed = seed;
  est.estimator = grad_kind ? "prop1_grad" : "prop1_hess";
  const double c = grad_kind ? f.grad_bound_c1 : f.hess_bound_c2;
  if (std::isfinite(c)) {
    const double per_entry = (p.r2 * c / mo.M) * (p.r2 * c / mo.M) / static_cast<double>(S);
    est.variance_bound = per_entry;
    if (!grad_kind) est.frobenius_bound = static_cast<double>(D) * D * per_entry;
  }
  return est;
}

enum class GaussianWhich { mu, sigma };

// Classical Gaussian comparison arms: mean grad f (location) and half the
// mean Hessian (scale) under N(mu, L L').
inline GradEstimate gaussian_baseline_grads(const Eigen::VectorXd& mu, const Eigen::MatrixXd& L,
                                            const TestFunction& f, std::size_t S,
                                            std::uint64_t seed, GaussianWhich which) {
  const QGaussian g = new_qgaussian_factor(mu, L, 1.0);
  GradEstimate est =
      which == GaussianWhich::mu ? grad_mu(g, f, S, seed) : grad_sigma(g, f, S, seed);
  est.estimator = which == GaussianWhich::mu ? "gaussian_mu" : "gaussian_sigma";
  return est;
}

}  // namespace qstein
