#pragma once

#include <cmath>
#include <stdexcept>

#include <boost/math/special_functions/beta.hpp>

namespace qstein {

inline constexpr double kLogPi = 1.1447298858494001741434273513530587;

inline double m_of_q(double q) {
  if (!(q < 1.0)) throw std::domain_error("m_of_q: requires q < 1");
  return 1.0 / (1.0 - q);
}

// log of the dimension/shape constant of the power-form density with exponent
// a: Z(a, D) = Gamma(D/2 + a + 1) / (pi^(D/2) Gamma(a + 1)).  The base law has
// a = m, the first associated (escort) law a = m + 1.
inline double log_level_const(double a, double D) {
  return std::lgamma(0.5 * D + a + 1.0) - 0.5 * D * kLogPi - std::lgamma(a + 1.0);
}

// Squared support radius, evaluated fully in log space:
//   R^2 = [(2m)^m * Z(m, D)]^(2 / (2m + D)).
inline double log_radius_sq(double q, double D) {
  const double m = m_of_q(q);
  const double bracket = m * std::log(2.0 * m) + log_level_const(m, D);
  return 2.0 / (2.0 * m + D) * bracket;
}

// The same quantity with the exponent grouped as 2(1-q) / (2 + D(1-q)).
// Algebraically identical; kept as an independent arrangement so the two can
// be cross-checked against numerical drift.
inline double log_radius_sq_regrouped(double q, double D) {
  const double m = m_of_q(q);
  const double one_minus_q = 1.0 - q;
  const double bracket = m * std::log(2.0 * m) + log_level_const(m, D);
  return 2.0 * one_minus_q / (2.0 + D * one_minus_q) * bracket;
}

inline double radius_sq(double q, double D) {
  const double a = log_radius_sq(q, D);
  const double b = log_radius_sq_regrouped(q, D);
  if (std::abs(a - b) > 1e-10 * std::max(1.0, std::abs(a)))
    throw std::runtime_error("radius_sq: the two exponent groupings disagree");
  return std::exp(a);
}

// Regularized incomplete beta — the CDF of Beta(a, b) at x.
inline double beta_cdf(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return boost::math::ibeta(a, b, x);
}

inline double beta_mean(double a, double b) { return a / (a + b); }

inline double beta_var(double a, double b) {
  const double s = a + b;
  return a * b / (s * s * (s + 1.0));
}

}  // namespace qstein
