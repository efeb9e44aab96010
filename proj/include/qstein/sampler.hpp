#pragma once

#include <cstdint>
#include <stdexcept>

#include <Eigen/Dense>

#include "qstein/parallel.hpp"
#include "qstein/qgauss.hpp"
#include "qstein/rng.hpp"

namespace qstein {

enum class Source { base, escort };

struct SampleBatch {
  Eigen::MatrixXd points;    // S x D, one draw per row
  Eigen::VectorXd s_values;  // cached s(x_k)
  std::uint64_t seed = 0;
  Source source = Source::base;
};

// Uniform draw on the unit sphere S^(D-1): normalize D independent normals.
// D = 1 degenerates to a fair +-1 coin.
inline Eigen::VectorXd sphere_point(Rng& rng, int D) {
  Eigen::VectorXd u(D);
  for (;;) {
    for (int i = 0; i < D; ++i) u(i) = rng.normal();
    const double n = u.norm();
    if (n > 0.0) return u / n;
  }
}

inline Eigen::MatrixXd sample_sphere(int D, std::size_t count, Rng& rng) {
  if (D < 1) throw std::invalid_argument("sample_sphere: D must be >= 1");
  Eigen::MatrixXd out(count, D);
  for (std::size_t k = 0; k < count; ++k) out.row(k) = sphere_point(rng, D).transpose();
  return out;
}

inline Eigen::VectorXd sample_beta(double alpha, double beta, std::size_t count, Rng& rng) {
  Eigen::VectorXd out(count);
  for (std::size_t k = 0; k < count; ++k) out(k) = rng.beta(alpha, beta);
  return out;
}

// Exact draws via the radial decomposition:
//   u ~ Unif(S^(D-1)),  r^2/R^2 ~ Beta(D/2, m+1)   (base; m+2 for the escort),
//   z = r u,  x = mu + L z.
// Every draw k uses its own child stream split(k) of Rng(seed), so the fill is
// embarrassingly parallel and bit-identical for any worker count.  The q = 1
// flag dispatches to the plain multivariate-normal path (z = normals).  An
// escort request on a Gaussian-limit instance returns base draws (p* = p).
inline SampleBatch sample(const QGaussian& p, std::size_t S, std::uint64_t seed,
                          Source source = Source::base) {
  if (S < 1) throw std::invalid_argument("sample: S must be >= 1");
  const int D = p.dim();
  SampleBatch batch;
  batch.points.resize(S, D);
  batch.s_values.resize(S);
  batch.seed = seed;
  batch.source = source;

  const Rng root(seed);
  const double beta_shape = p.gaussian ? 0.0 : p.m + (source == Source::escort ? 2.0 : 1.0);

  block_for(S, 4096, [&](std::size_t lo, std::size_t hi) {
    Eigen::VectorXd z(D);
    for (std::size_t k = lo; k < hi; ++k) {
      Rng g = root.split(k);
      if (p.gaussian) {
        for (int i = 0; i < D; ++i) z(i) = g.normal();
        batch.s_values(k) = z.squaredNorm();
      } else {
        z = sphere_point(g, D);
        const double b = g.beta(0.5 * D, beta_shape);
        z *= std::sqrt(p.r2 * b);
        batch.s_values(k) = p.r2 * b;
      }
      batch.points.row(k) = (p.mu + p.L.triangularView<Eigen::Lower>() * z).transpose();
    }
  });
  return batch;
}

}  // namespace qstein
