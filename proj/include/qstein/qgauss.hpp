#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include <Eigen/Dense>

#include "qstein/special.hpp"

namespace qstein {

// Bounded-support member of the Pearson Type II elliptical family:
//   p(x) = |Sigma|^(-1/2) * Z / R^(D+2m) * (R^2 - s(x))^m   on  { s(x) < R^2 },
// with s(x) = (x-mu)' Sigma^{-1} (x-mu), m = 1/(1-q), and R^2 fixed by (q, D)
// so that the density normalizes with unit "width" parameter.  q = 1 is a
// tagged special case dispatching to the exact Gaussian N(mu, Sigma); members
// with 1 - 1e-8 < q < 1 are rejected because (R^2 - s)^m is numerically
// meaningless for m > 1e8.
struct QGaussian {
  Eigen::VectorXd mu;
  Eigen::MatrixXd L;  // lower-triangular factor, Sigma = L * L'
  double q = 0.0;
  bool gaussian = false;  // q == 1 exactly
  double m = 0.0;         // 1/(1-q); unused when gaussian
  double r2 = std::numeric_limits<double>::infinity();
  double log_det_L = 0.0;

  int dim() const { return static_cast<int>(mu.size()); }
};

namespace detail {

inline void check_q(double q) {
  if (q > 1.0)
    throw std::invalid_argument(
        "q > 1 selects the heavy-tailed (unbounded-support, Pearson Type VII) "
        "regime, which is not supported");
  if (q != 1.0 && q > 1.0 - 1e-8)
    throw std::invalid_argument(
        "q in (1 - 1e-8, 1) rejected: the exponent 1/(1-q) exceeds 1e8 and the "
        "density is numerically meaningless; use q = 1 for the Gaussian case");
}

inline void finish(QGaussian& p) {
  if (p.L.rows() != p.L.cols() || p.L.rows() != p.mu.size())
    throw std::invalid_argument("QGaussian: mu and factor dimensions disagree");
  double ld = 0.0;
  for (int i = 0; i < p.L.rows(); ++i) {
    if (!(p.L(i, i) > 0.0))
      throw std::invalid_argument("QGaussian: factor diagonal must be positive");
    ld += std::log(p.L(i, i));
  }
  p.log_det_L = ld;
  if (p.q == 1.0) {
    p.gaussian = true;
    p.m = std::numeric_limits<double>::infinity();
    p.r2 = std::numeric_limits<double>::infinity();
  } else {
    p.gaussian = false;
    p.m = m_of_q(p.q);
    p.r2 = radius_sq(p.q, static_cast<double>(p.dim()));
  }
}

}  // namespace detail

// Construct from a dense symmetric covariance (factored here; failure to
// factor is an error).
inline QGaussian new_qgaussian(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, double q) {
  detail::check_q(q);
  if (sigma.rows() != sigma.cols() || sigma.rows() != mu.size())
    throw std::invalid_argument("new_qgaussian: sigma must be square and match mu");
  const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument("new_qgaussian: sigma is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("new_qgaussian: sigma is not positive definite");
  QGaussian p;
  p.mu = mu;
  p.L = llt.matrixL();
  p.q = q;
  detail::finish(p);
  return p;
}

// Construct from the lower-triangular factor directly (Sigma = L L').
inline QGaussian new_qgaussian_factor(const Eigen::VectorXd& mu, const Eigen::MatrixXd& L, double q) {
  detail::check_q(q);
  if (L.rows() != L.cols() || L.rows() != mu.size())
    throw std::invalid_argument("new_qgaussian_factor: factor must be square and match mu");
  QGaussian p;
  p.mu = mu;
  p.L = Eigen::MatrixXd(L.triangularView<Eigen::Lower>());
  p.q = q;
  detail::finish(p);
  return p;
}

inline Eigen::MatrixXd sigma_of(const QGaussian& p) { return p.L * p.L.transpose(); }

inline double radius_sq(const QGaussian& p) { return p.r2; }

// Squared Mahalanobis radius s(x) = || L^{-1} (x - mu) ||^2.
inline double mahalanobis_sq(const QGaussian& p, const Eigen::VectorXd& x) {
  const Eigen::VectorXd z = p.L.triangularView<Eigen::Lower>().solve(x - p.mu);
  return z.squaredNorm();
}

// k-th associated law: density proportional to (R^2 - s)^(m+k) on the same
// support.  k = 1 is the escort p* (proportional to p^(2-q)); k = 0 is the
// base law itself.  In the Gaussian limit the escort coincides with the base.
struct EscortLaw {
  QGaussian base;
  int k = 1;
  double order = 0.0;  // escort order 1 + k(1-q); 1 in the Gaussian limit
};

inline EscortLaw escort(const QGaussian& p, int k = 1) {
  if (k < 0) throw std::invalid_argument("escort: order shift k must be >= 0");
  EscortLaw e;
  e.base = p;
  e.k = k;
  e.order = p.gaussian ? 1.0 : 1.0 + k * (1.0 - p.q);
  return e;
}

// log density; empty when x lies outside the (open) support.  "Outside" is a
// distinguished result so callers can tell a boundary hit from underflow.
inline std::optional<double> log_density(const QGaussian& p, const Eigen::VectorXd& x) {
  const double s = mahalanobis_sq(p, x);
  const double D = p.dim();
  if (p.gaussian) {
    constexpr double log2pi = 1.8378770664093454835606594728112353;
    return -0.5 * D * log2pi - p.log_det_L - 0.5 * s;
  }
  if (!(s < p.r2)) return std::nullopt;
  const double log_r = 0.5 * std::log(p.r2);
  return -p.log_det_L + log_level_const(p.m, D) - (D + 2.0 * p.m) * log_r +
         p.m * std::log(p.r2 - s);
}

inline std::optional<double> log_density(const EscortLaw& e, const Eigen::VectorXd& x) {
  const QGaussian& p = e.base;
  const double s = mahalanobis_sq(p, x);
  const double D = p.dim();
  if (p.gaussian) {
    constexpr double log2pi = 1.8378770664093454835606594728112353;
    return -0.5 * D * log2pi - p.log_det_L - 0.5 * s;
  }
  if (!(s < p.r2)) return std::nullopt;
  const double a = p.m + e.k;
  const double log_r = 0.5 * std::log(p.r2);
  return -p.log_det_L + log_level_const(a, D) - (D + 2.0 * a) * log_r +
         a * std::log(p.r2 - s);
}

template <class Law>
inline double density(const Law& law, const Eigen::VectorXd& x) {
  const auto lp = log_density(law, x);
  return lp ? std::exp(*lp) : 0.0;
}

// Law of s(x) under the base (order 0) or escort (order 1) distribution:
// s / R^2 ~ Beta(D/2, m + 1 + order), i.e. s ~ Beta scaled by R^2.
struct RadialLaw {
  double alpha = 0.0;
  double beta = 0.0;
  double scale = 0.0;  // R^2
};

inline RadialLaw radial_law(const QGaussian& p, int escort_order = 0) {
  if (escort_order != 0 && escort_order != 1)
    throw std::invalid_argument("radial_law: escort_order must be 0 or 1");
  if (p.gaussian)
    throw std::domain_error(
        "radial_law: undefined in the Gaussian limit (s is chi-square(D), not scaled Beta)");
  RadialLaw r;
  r.alpha = 0.5 * p.dim();
  r.beta = p.m + 1.0 + escort_order;
  r.scale = p.r2;
  return r;
}

inline double radial_mean(const RadialLaw& r) { return r.scale * beta_mean(r.alpha, r.beta); }

// Closed-form moments:
//   e_s_p    = E_p[s]      = D R^2 / (D + 2(m+1))
//   e_s_star = E_p*[s]     = D R^2 / (D + 2(m+2))
//   M        = E_p[R^2 - s]
//   cov_scale            so that Cov_p(x) = cov_scale * Sigma
// In the Gaussian limit: E[s] = D and cov_scale = 1 (M has no finite analogue).
struct Moments {
  double e_s_p = 0.0;
  double e_s_star = 0.0;
  double M = 0.0;
  double cov_scale = 0.0;
};

inline Moments moments(const QGaussian& p) {
  Moments mo;
  const double D = p.dim();
  if (p.gaussian) {
    mo.e_s_p = D;
    mo.e_s_star = D;
    mo.M = std::numeric_limits<double>::quiet_NaN();
    mo.cov_scale = 1.0;
    return mo;
  }
  mo.e_s_p = D * p.r2 / (D + 2.0 * (p.m + 1.0));
  mo.e_s_star = D * p.r2 / (D + 2.0 * (p.m + 2.0));
  mo.M = p.r2 - mo.e_s_p;
  mo.cov_scale = mo.e_s_p / D;
  // cross-check the coefficient identity E_p[s]/D = M / (2(m+1))
  const double rhs = mo.M / (2.0 * (p.m + 1.0));
  if (std::abs(mo.cov_scale - rhs) > 1e-12 * std::max(1.0, std::abs(rhs)))
    throw std::runtime_error("moments: coefficient identity violated");
  return mo;
}

}  // namespace qstein
