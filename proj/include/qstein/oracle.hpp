#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "qstein/qgauss.hpp"

namespace qstein {

// ---------------------------------------------------------------------------
// Gauss–Legendre rules on [-1, 1], computed by Newton iteration on P_n and
// cached per node count.
// ---------------------------------------------------------------------------

struct GLRule {
  std::vector<double> x;
  std::vector<double> w;
};

namespace detail {

inline GLRule make_gl_rule(int n) {
  GLRule r;
  r.x.resize(n);
  r.w.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      // evaluate P_n(x) and P_n'(x) by the three-term recurrence
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    r.x[i] = -x;
    r.x[n - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.w[i] = w;
    r.w[n - 1 - i] = w;
  }
  return r;
}

}  // namespace detail

inline const GLRule& gl_rule(int n) {
  static std::map<int, GLRule> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, detail::make_gl_rule(n)).first;
  return it->second;
}

// ---------------------------------------------------------------------------
// Deterministic expectation oracle, D <= 2 only.  Works in the whitened
// z-space (x = mu + L z) where the density is radial.  For bounded laws the
// 2-D grid is slice-adapted: the inner interval is [-rho(z2), rho(z2)] with
// rho = sqrt(R^2 - z2^2), so every node lies inside the support and the
// integrand keeps its smooth (R^2 - s)^a decay at the mapped boundary.
// Gaussian-limit laws are integrated over [-10, 10] per axis (tail < 1e-22).
// ---------------------------------------------------------------------------

struct QuadratureSpec {
  int nodes_1d = 0;  // 0 = default (2048 in 1-D, 256 per axis in 2-D)
  double target_abs_tol = 1e-8;
};

namespace detail {

// exponent < 0 signals the Gaussian-limit density exp(-||z||^2 / 2).
inline double quad_z(const QGaussian& p, double exponent,
                     const std::function<double(const Eigen::VectorXd&)>& g, int nodes) {
  const int D = p.dim();
  const bool gauss = exponent < 0.0;
  const double R = gauss ? 10.0 : std::sqrt(p.r2);
  double log_c;
  if (gauss) {
    constexpr double log2pi = 1.8378770664093454835606594728112353;
    log_c = -0.5 * D * log2pi;
  } else {
    log_c = log_level_const(exponent, D) - (D + 2.0 * exponent) * 0.5 * std::log(p.r2);
  }
  const GLRule& rule = gl_rule(nodes);
  const auto lower = p.L.triangularView<Eigen::Lower>();

  if (D == 1) {
    double acc = 0.0;
    Eigen::VectorXd z(1);
    for (int i = 0; i < nodes; ++i) {
      z(0) = R * rule.x[i];
      const double s = z(0) * z(0);
      const double logd = gauss ? log_c - 0.5 * s : log_c + exponent * std::log(p.r2 - s);
      acc += R * rule.w[i] * std::exp(logd) * g(p.mu + lower * z);
    }
    return acc;
  }
  if (D == 2) {
    double acc = 0.0;
    Eigen::VectorXd z(2);
    for (int i = 0; i < nodes; ++i) {
      z(1) = R * rule.x[i];
      const double rho = gauss ? R : std::sqrt(p.r2 - z(1) * z(1));
      double inner = 0.0;
      for (int j = 0; j < nodes; ++j) {
        z(0) = rho * rule.x[j];
        const double s = z.squaredNorm();
        const double logd = gauss ? log_c - 0.5 * s : log_c + exponent * std::log(p.r2 - s);
        inner += rule.w[j] * std::exp(logd) * g(p.mu + lower * z);
      }
      acc += R * rule.w[i] * rho * inner;
    }
    return acc;
  }
  throw std::invalid_argument("expect_quadrature: oracle supports D <= 2 only");
}

inline int default_nodes(int D, int requested) {
  if (requested > 0) return requested;
  return D == 1 ? 2048 : 256;
}

}  // namespace detail

inline double expect_quadrature(const QGaussian& p,
                                const std::function<double(const Eigen::VectorXd&)>& g,
                                const QuadratureSpec& spec = {}) {
  if (p.dim() > 2) throw std::invalid_argument("expect_quadrature: oracle supports D <= 2 only");
  const double a = p.gaussian ? -1.0 : p.m;
  return detail::quad_z(p, a, g, detail::default_nodes(p.dim(), spec.nodes_1d));
}

inline double expect_quadrature(const EscortLaw& e,
                                const std::function<double(const Eigen::VectorXd&)>& g,
                                const QuadratureSpec& spec = {}) {
  const QGaussian& p = e.base;
  if (p.dim() > 2) throw std::invalid_argument("expect_quadrature: oracle supports D <= 2 only");
  const double a = p.gaussian ? -1.0 : p.m + e.k;
  return detail::quad_z(p, a, g, detail::default_nodes(p.dim(), spec.nodes_1d));
}

inline int law_dim(const QGaussian& p) { return p.dim(); }
inline int law_dim(const EscortLaw& e) { return e.base.dim(); }

// Self-convergence check from QuadratureSpec: doubling the node count moves
// the density integral by less than the target tolerance.
template <class Law>
inline bool quadrature_converged(const Law& law, const QuadratureSpec& spec = {}) {
  auto one = [](const Eigen::VectorXd&) { return 1.0; };
  const int n = detail::default_nodes(law_dim(law), spec.nodes_1d);
  QuadratureSpec s1 = spec;
  s1.nodes_1d = n;
  QuadratureSpec s2 = spec;
  s2.nodes_1d = 2 * n;
  return std::abs(expect_quadrature(law, one, s1) - expect_quadrature(law, one, s2)) <
         spec.target_abs_tol;
}

// ---------------------------------------------------------------------------
// Finite differences of a parametric expectation E(mu, Sigma), central stencil
// with step h = 1e-4 * (1 + |theta|).  Sigma entries are treated as
// unconstrained coordinates of a symmetric matrix: the perturbation direction
// is E_ij + E_ji for i != j (divisor 4h) and E_ii on the diagonal (divisor
// 2h).  Steps that break positive definiteness are auto-shrunk; if no
// positive-definite step exists the failure propagates.
// ---------------------------------------------------------------------------

enum class FdParam { mu, sigma };

struct FdSpec {
  FdParam kind = FdParam::mu;
  int i = 0;
  int j = 0;  // sigma only
  bool richardson = false;
};

inline double fd_grad_param(const std::function<double(const Eigen::VectorXd&, const Eigen::MatrixXd&)>& E,
                            const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                            const FdSpec& which) {
  const double theta =
      which.kind == FdParam::mu ? mu(which.i) : sigma(which.i, which.j);
  double h = 1e-4 * (1.0 + std::abs(theta));

  auto central = [&](double step) -> double {
    if (which.kind == FdParam::mu) {
      Eigen::VectorXd hi = mu, lo = mu;
      hi(which.i) += step;
      lo(which.i) -= step;
      return (E(hi, sigma) - E(lo, sigma)) / (2.0 * step);
    }
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(sigma.rows(), sigma.cols());
    if (which.i == which.j) {
      P(which.i, which.i) = 1.0;
      return (E(mu, sigma + step * P) - E(mu, sigma - step * P)) / (2.0 * step);
    }
    P(which.i, which.j) = 1.0;
    P(which.j, which.i) = 1.0;
    return (E(mu, sigma + step * P) - E(mu, sigma - step * P)) / (4.0 * step);
  };

  auto central_shrinking = [&](double step) -> double {
    for (int attempt = 0; attempt < 60; ++attempt) {
      try {
        return central(step);
      } catch (const std::invalid_argument&) {
        step *= 0.5;  // perturbation broke positive definiteness
      }
    }
    return central(step);  // let the failure propagate
  };

  const double d1 = central_shrinking(h);
  if (!which.richardson) return d1;
  const double d2 = central_shrinking(0.5 * h);
  return (4.0 * d2 - d1) / 3.0;
}

}  // namespace qstein
