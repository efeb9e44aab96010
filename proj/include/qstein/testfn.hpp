#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qstein/qgauss.hpp"
#include "qstein/rng.hpp"

namespace qstein {

// A test target f with its exact derivatives and (when available) sup bounds
// over the support of the generating distribution:
//   grad_bound_c1 >= sup ||grad f||_2,  hess_bound_c2 >= sup ||hess f||_op.
// NaN means "no finite bound supplied" (e.g. polynomials on unbounded
// support); variance bounds are then skipped, the estimators still run.
struct TestFunction {
  std::string name;
  std::function<double(const Eigen::VectorXd&)> eval;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hess;
  double grad_bound_c1 = std::numeric_limits<double>::quiet_NaN();
  double hess_bound_c2 = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline double softplus(double t) { return t > 30.0 ? t : std::log1p(std::exp(t)); }
inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// Per-coordinate half-widths of the support box: |x_i - mu_i| <= R ||e_i' L||.
// Empty (infinite) in the Gaussian limit.
inline Eigen::VectorXd coord_halfwidths(const QGaussian& p) {
  const int D = p.dim();
  Eigen::VectorXd b(D);
  if (p.gaussian) {
    b.setConstant(std::numeric_limits<double>::infinity());
    return b;
  }
  const double R = std::sqrt(p.r2);
  for (int i = 0; i < D; ++i) b(i) = R * p.L.row(i).norm();
  return b;
}

// Upper bound on sup ||x|| over the support (Frobenius dominates the spectral
// norm of L).
inline double norm_bound(const QGaussian& p) {
  if (p.gaussian) return std::numeric_limits<double>::infinity();
  return p.mu.norm() + std::sqrt(p.r2) * p.L.norm();
}

}  // namespace detail

// The battery: poly2, poly4, sine, tanh_sum, logistic_loss.  Bounds are
// computed for the support of `p` where finite.
inline std::vector<TestFunction> battery(const QGaussian& p) {
  const int D = p.dim();
  const Eigen::VectorXd halfw = detail::coord_halfwidths(p);
  const double xnorm = detail::norm_bound(p);
  std::vector<TestFunction> fns;

  {
    // quadratic with cross terms: f = x'Ax + b'x, A = I + 0.25 (J - I)
    Eigen::MatrixXd A = Eigen::MatrixXd::Constant(D, D, 0.25);
    A.diagonal().setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Constant(D, 0.3);
    TestFunction f;
    f.name = "poly2";
    f.eval = [A, b](const Eigen::VectorXd& x) { return x.dot(A * x) + b.dot(x); };
    f.grad = [A, b](const Eigen::VectorXd& x) { return Eigen::VectorXd(2.0 * (A * x) + b); };
    f.hess = [A](const Eigen::VectorXd&) { return Eigen::MatrixXd(2.0 * A); };
    const double amax = 1.0 + 0.25 * (D - 1);  // largest eigenvalue of A
    if (std::isfinite(xnorm)) {
      f.grad_bound_c1 = 2.0 * amax * xnorm + b.norm();
      f.hess_bound_c2 = 2.0 * amax;
    }
    fns.push_back(std::move(f));
  }
  {
    TestFunction f;
    f.name = "poly4";
    f.eval = [](const Eigen::VectorXd& x) { return x.array().pow(4).sum(); };
    f.grad = [](const Eigen::VectorXd& x) { return Eigen::VectorXd(4.0 * x.array().pow(3)); };
    f.hess = [](const Eigen::VectorXd& x) {
      return Eigen::MatrixXd(Eigen::VectorXd(12.0 * x.array().square()).asDiagonal());
    };
    if (std::isfinite(xnorm)) {
      const Eigen::VectorXd m = p.mu.cwiseAbs() + halfw;  // per-coordinate |x_i| bound
      f.grad_bound_c1 = 4.0 * std::sqrt(m.array().pow(6).sum());
      f.hess_bound_c2 = 12.0 * m.array().square().maxCoeff();
    }
    fns.push_back(std::move(f));
  }
  {
    TestFunction f;
    f.name = "sine";
    f.eval = [](const Eigen::VectorXd& x) { return x.array().sin().sum(); };
    f.grad = [](const Eigen::VectorXd& x) { return Eigen::VectorXd(x.array().cos()); };
    f.hess = [](const Eigen::VectorXd& x) {
      return Eigen::MatrixXd(Eigen::VectorXd(-x.array().sin()).asDiagonal());
    };
    f.grad_bound_c1 = std::sqrt(static_cast<double>(D));
    f.hess_bound_c2 = 1.0;
    fns.push_back(std::move(f));
  }
  {
    TestFunction f;
    f.name = "tanh_sum";
    f.eval = [](const Eigen::VectorXd& x) { return x.array().tanh().sum(); };
    f.grad = [](const Eigen::VectorXd& x) {
      return Eigen::VectorXd(1.0 - x.array().tanh().square());
    };
    f.hess = [](const Eigen::VectorXd& x) {
      const Eigen::ArrayXd t = x.array().tanh();
      return Eigen::MatrixXd(Eigen::VectorXd(-2.0 * t * (1.0 - t.square())).asDiagonal());
    };
    f.grad_bound_c1 = std::sqrt(static_cast<double>(D));
    f.hess_bound_c2 = 4.0 / (3.0 * std::sqrt(3.0));  // sup |2 t (1 - t^2)|, t in (-1, 1)
    fns.push_back(std::move(f));
  }
  {
    // mean logistic loss of a small fixed synthetic set (deterministic in D)
    const int n = 16;
    Eigen::MatrixXd A(n, D);
    Eigen::VectorXd y(n);
    Rng rng(0x10915c0ULL + static_cast<std::uint64_t>(D));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < D; ++j) A(i, j) = rng.normal();
      y(i) = rng.uniform() < 0.5 ? -1.0 : 1.0;
    }
    TestFunction f;
    f.name = "logistic_loss";
    f.eval = [A, y, n](const Eigen::VectorXd& w) {
      const Eigen::VectorXd t = -(y.array() * (A * w).array());
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += detail::softplus(t(i));
      return acc / n;
    };
    f.grad = [A, y, n](const Eigen::VectorXd& w) {
      const Eigen::VectorXd z = A * w;
      Eigen::VectorXd g = Eigen::VectorXd::Zero(w.size());
      for (int i = 0; i < n; ++i) g -= y(i) * detail::sigmoid(-y(i) * z(i)) * A.row(i).transpose();
      return Eigen::VectorXd(g / n);
    };
    f.hess = [A, y, n](const Eigen::VectorXd& w) {
      const Eigen::VectorXd z = A * w;
      Eigen::MatrixXd H = Eigen::MatrixXd::Zero(w.size(), w.size());
      for (int i = 0; i < n; ++i) {
        const double s = detail::sigmoid(y(i) * z(i));
        H += s * (1.0 - s) * (A.row(i).transpose() * A.row(i));
      }
      return Eigen::MatrixXd(H / n);
    };
    // global bounds: |sigmoid| <= 1 and sigmoid(1-sigmoid) <= 1/4
    double c1 = 0.0;
    for (int i = 0; i < n; ++i) c1 += A.row(i).norm();
    f.grad_bound_c1 = c1 / n;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A.transpose() * A / n);
    f.hess_bound_c2 = 0.25 * es.eigenvalues().maxCoeff();
    fns.push_back(std::move(f));
  }
  return fns;
}

inline TestFunction battery_function(const QGaussian& p, const std::string& name) {
  for (auto& f : battery(p))
    if (f.name == name) return f;
  throw std::invalid_argument("unknown battery function: " + name);
}

inline std::vector<std::string> battery_names() {
  return {"poly2", "poly4", "sine", "tanh_sum", "logistic_loss"};
}

}  // namespace qstein
