#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "qstein/io.hpp"
#include "qstein/oracle.hpp"
#include "qstein/qgauss.hpp"

using Catch::Matchers::ContainsSubstring;
using qstein::escort;
using qstein::new_qgaussian;
using qstein::new_qgaussian_factor;
using qstein::QGaussian;

namespace {

const std::vector<double> kGridQ = {0.0, 0.3, 0.5, 0.8, 0.99};

QGaussian law(double q, int D) {
  return new_qgaussian_factor(Eigen::VectorXd::Zero(D), Eigen::MatrixXd::Identity(D, D), q);
}

}  // namespace

TEST_CASE("radius at q = 0, D = 1 equals (3/2)^(2/3)") {
  const double ref = std::cbrt(1.5 * 1.5);
  CHECK(std::abs(qstein::radius_sq(0.0, 1.0) - ref) < 1e-12);
  CHECK(std::abs(law(0.0, 1).r2 - ref) < 1e-12);
}

TEST_CASE("the two groupings of the radius formula agree") {
  for (double q : kGridQ)
    for (double D : {1.0, 2.0, 10.0, 100.0, 1e4, 1e6}) {
      const double a = qstein::log_radius_sq(q, D);
      const double b = qstein::log_radius_sq_regrouped(q, D);
      CHECK(std::abs(a - b) <= 1e-10 * std::max(1.0, std::abs(a)));
      const double r2 = qstein::radius_sq(q, D);
      REQUIRE(std::isfinite(r2));
      REQUIRE(r2 > 0.0);
    }
}

TEST_CASE("q above one is rejected as the wrong regime") {
  CHECK_THROWS_MATCHES(law(1.5, 1), std::invalid_argument,
                       Catch::Matchers::MessageMatches(ContainsSubstring("heavy-tailed") &&
                                                       ContainsSubstring("not supported")));
  CHECK_THROWS_AS(law(1.0 + 1e-12, 1), std::invalid_argument);
}

TEST_CASE("the numerically meaningless sliver below one is rejected") {
  CHECK_THROWS_AS(law(1.0 - 1e-9, 1), std::invalid_argument);
  CHECK_NOTHROW(law(1.0 - 1e-8, 1));  // boundary of the allowed range
  CHECK_NOTHROW(law(1.0, 1));
}

TEST_CASE("constructor validates shape, symmetry, and definiteness") {
  const Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
  bad(0, 1) = 0.5;  // asymmetric
  CHECK_THROWS_AS(new_qgaussian(mu, bad, 0.5), std::invalid_argument);

  Eigen::MatrixXd npd(2, 2);
  npd << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3, -1
  CHECK_THROWS_AS(new_qgaussian(mu, npd, 0.5), std::invalid_argument);

  CHECK_THROWS_AS(new_qgaussian(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(2, 2), 0.5),
                  std::invalid_argument);

  Eigen::MatrixXd negdiag = Eigen::MatrixXd::Identity(2, 2);
  negdiag(1, 1) = -1.0;
  CHECK_THROWS_AS(new_qgaussian_factor(mu, negdiag, 0.5), std::invalid_argument);
}

TEST_CASE("covariance factor round-trips") {
  Eigen::MatrixXd sigma(2, 2);
  sigma << 2.0, 0.6, 0.6, 1.0;
  Eigen::VectorXd mu(2);
  mu << 0.3, -0.7;
  const QGaussian p = new_qgaussian(mu, sigma, 0.5);
  CHECK((qstein::sigma_of(p) - sigma).cwiseAbs().maxCoeff() < 1e-12);
  // s(mu + L z) = ||z||^2
  Eigen::VectorXd z(2);
  z << 0.4, -0.2;
  const Eigen::VectorXd x = mu + p.L * z;
  CHECK(std::abs(qstein::mahalanobis_sq(p, x) - z.squaredNorm()) < 1e-12);
}

TEST_CASE("densities normalize to one over the whole grid") {
  auto one = [](const Eigen::VectorXd&) { return 1.0; };
  for (double q : kGridQ)
    for (int D : {1, 2}) {
      const QGaussian p = law(q, D);
      CHECK(std::abs(qstein::expect_quadrature(p, one) - 1.0) < 1e-8);
      CHECK(std::abs(qstein::expect_quadrature(escort(p, 1), one) - 1.0) < 1e-8);
      CHECK(std::abs(qstein::expect_quadrature(escort(p, 2), one) - 1.0) < 1e-8);
    }
  // Gaussian limit and a non-identity scale
  const QGaussian g = law(1.0, 2);
  CHECK(std::abs(qstein::expect_quadrature(g, one) - 1.0) < 1e-8);
  Eigen::MatrixXd sigma(2, 2);
  sigma << 2.0, 0.6, 0.6, 1.0;
  const QGaussian p = new_qgaussian(Eigen::VectorXd::Zero(2), sigma, 0.3);
  CHECK(std::abs(qstein::expect_quadrature(p, one) - 1.0) < 1e-8);
}

TEST_CASE("support is open: outside points report empty log density") {
  const QGaussian p = law(0.5, 2);
  const double R = std::sqrt(p.r2);
  Eigen::VectorXd in(2), out(2), edge(2);
  in << 0.5 * R, 0.0;
  out << 1.0001 * R, 0.0;
  edge << R, 0.0;
  CHECK(qstein::log_density(p, in).has_value());
  CHECK_FALSE(qstein::log_density(p, out).has_value());
  CHECK_FALSE(qstein::log_density(p, edge).has_value());  // boundary itself excluded
  CHECK(qstein::density(p, out) == 0.0);
  CHECK(qstein::density(p, in) > 0.0);
  // the Gaussian limit has full support
  CHECK(qstein::log_density(law(1.0, 2), 100.0 * Eigen::VectorXd::Ones(2)).has_value());
}

TEST_CASE("density decays to zero at the boundary") {
  for (double q : {0.0, 0.5, 0.8}) {
    const QGaussian p = law(q, 1);
    const double R = std::sqrt(p.r2);
    Eigen::VectorXd x(1);
    x << R * (1.0 - 1e-13);
    const double near = qstein::density(p, x);
    x << 0.9 * R;
    CHECK(near < qstein::density(p, x));
    CHECK(near < 1e-6);
  }
}

TEST_CASE("zeroth associated law is the base law") {
  const QGaussian p = law(0.3, 2);
  const auto e0 = escort(p, 0);
  CHECK(e0.order == 1.0);
  qstein::Rng r(5);
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXd x(2);
    x << (2.0 * r.uniform() - 1.0), (2.0 * r.uniform() - 1.0);
    x *= 0.5 * std::sqrt(p.r2);
    const double a = *qstein::log_density(p, x);
    const double b = *qstein::log_density(e0, x);
    CHECK(std::abs(a - b) < 1e-12 * std::max(1.0, std::abs(a)));
  }
}

TEST_CASE("escort density is the normalized (2 - q) power of the base") {
  for (double q : {0.0, 0.5, 0.8}) {
    const QGaussian p = law(q, 2);
    const auto e = escort(p);
    CHECK(e.order == Catch::Approx(2.0 - q).margin(1e-15));
    qstein::Rng r(11);
    double c0 = 0.0;
    for (int t = 0; t < 50; ++t) {
      Eigen::VectorXd x(2);
      x << (2.0 * r.uniform() - 1.0), (2.0 * r.uniform() - 1.0);
      x *= 0.6 * std::sqrt(p.r2) / std::sqrt(2.0);
      const double c = *qstein::log_density(e, x) - (2.0 - q) * *qstein::log_density(p, x);
      if (t == 0) c0 = c;
      CHECK(std::abs(c - c0) < 1e-10);
    }
  }
  // escort of the Gaussian limit is the Gaussian itself
  const QGaussian g = law(1.0, 1);
  Eigen::VectorXd x(1);
  x << 0.7;
  CHECK(*qstein::log_density(escort(g), x) == *qstein::log_density(g, x));
  CHECK(escort(g).order == 1.0);
}

TEST_CASE("escort equals the radius-weighted base density") {
  // p*(x) = (R^2 - s(x)) p(x) / M pointwise
  for (double q : {0.0, 0.5, 0.99}) {
    const QGaussian p = law(q, 2);
    const auto e = escort(p);
    const auto mo = qstein::moments(p);
    qstein::Rng r(17);
    for (int t = 0; t < 50; ++t) {
      Eigen::VectorXd x(2);
      x << (2.0 * r.uniform() - 1.0), (2.0 * r.uniform() - 1.0);
      x *= 0.7 * std::sqrt(p.r2) / std::sqrt(2.0);
      const double s = qstein::mahalanobis_sq(p, x);
      const double lhs = qstein::density(e, x);
      const double rhs = (p.r2 - s) * qstein::density(p, x) / mo.M;
      CHECK(std::abs(lhs - rhs) < 1e-10 * std::max(1.0, std::abs(rhs)));
    }
  }
}

TEST_CASE("negative order shifts are rejected") {
  CHECK_THROWS_AS(escort(law(0.5, 1), -1), std::invalid_argument);
}

TEST_CASE("radial law parameters and means") {
  const QGaussian p = law(0.0, 1);
  const auto base = qstein::radial_law(p, 0);
  CHECK(base.alpha == 0.5);
  CHECK(base.beta == 2.0);
  CHECK(base.scale == p.r2);
  const auto esc = qstein::radial_law(p, 1);
  CHECK(esc.beta == 3.0);

  const auto mo = qstein::moments(p);
  CHECK(std::abs(qstein::radial_mean(base) - mo.e_s_p) < 1e-14);
  CHECK(std::abs(qstein::radial_mean(esc) - mo.e_s_star) < 1e-14);

  CHECK_THROWS_AS(qstein::radial_law(p, 2), std::invalid_argument);
  CHECK_THROWS_AS(qstein::radial_law(law(1.0, 1), 0), std::domain_error);
}

TEST_CASE("closed-form moments at q = 0, D = 1") {
  const QGaussian p = law(0.0, 1);
  const auto mo = qstein::moments(p);
  CHECK(mo.e_s_p == Catch::Approx(p.r2 / 5.0).epsilon(1e-14));
  CHECK(mo.e_s_star == Catch::Approx(p.r2 / 7.0).epsilon(1e-14));
  CHECK(mo.M == Catch::Approx(4.0 * p.r2 / 5.0).epsilon(1e-14));
  CHECK(mo.cov_scale == Catch::Approx(p.r2 / 5.0).epsilon(1e-14));
}

TEST_CASE("moments against the quadrature oracle") {
  for (double q : kGridQ)
    for (int D : {1, 2}) {
      const QGaussian p = law(q, D);
      const auto mo = qstein::moments(p);
      auto s_of = [&](const Eigen::VectorXd& x) { return qstein::mahalanobis_sq(p, x); };
      CHECK(std::abs(qstein::expect_quadrature(p, s_of) - mo.e_s_p) < 1e-8);
      CHECK(std::abs(qstein::expect_quadrature(escort(p), s_of) - mo.e_s_star) < 1e-8);
    }
}

TEST_CASE("gaussian-limit moments") {
  const auto mo = qstein::moments(law(1.0, 3));
  CHECK(mo.e_s_p == 3.0);
  CHECK(mo.e_s_star == 3.0);
  CHECK(mo.cov_scale == 1.0);
  CHECK(std::isnan(mo.M));
}

TEST_CASE("covariance of the law is cov_scale times Sigma") {
  Eigen::MatrixXd sigma(2, 2);
  sigma << 1.5, -0.4, -0.4, 0.8;
  Eigen::VectorXd mu(2);
  mu << 0.2, 0.1;
  const QGaussian p = new_qgaussian(mu, sigma, 0.5);
  const auto mo = qstein::moments(p);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      auto g = [&](const Eigen::VectorXd& x) { return (x(i) - mu(i)) * (x(j) - mu(j)); };
      CHECK(std::abs(qstein::expect_quadrature(p, g) - mo.cov_scale * sigma(i, j)) < 1e-8);
    }
}

TEST_CASE("densities approach the standard normal as q approaches one") {
  auto sup_dist = [](double q) {
    const QGaussian p = law(q, 1);
    double worst = 0.0;
    for (int i = 0; i <= 120; ++i) {
      Eigen::VectorXd x(1);
      x << -3.0 + 6.0 * i / 120.0;
      const double phi = std::exp(-0.5 * x(0) * x(0)) / std::sqrt(2.0 * M_PI);
      worst = std::max(worst, std::abs(qstein::density(p, x) - phi));
    }
    return worst;
  };
  const double d1 = sup_dist(0.99);
  const double d2 = sup_dist(0.999);
  const double d3 = sup_dist(0.9999);
  CHECK(d2 < d1);
  CHECK(d3 < d2);
  CHECK(d3 < 1e-3);
}

TEST_CASE("distribution JSON round-trip is exact") {
  Eigen::MatrixXd L(2, 2);
  L << 1.3, 0.0, -0.25, 0.7;
  Eigen::VectorXd mu(2);
  mu << 0.123456789012345, -3.0;
  const QGaussian p = new_qgaussian_factor(mu, L, 0.8);
  const auto j = qstein::qgaussian_to_json(p);
  const QGaussian back = qstein::qgaussian_from_json(j);
  CHECK(back.q == p.q);
  CHECK((back.mu - p.mu).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.L - p.L).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.r2 == p.r2);  // derived fields recomputed, not stored

  auto bad = j;
  bad["extra"] = 1;
  CHECK_THROWS_AS(qstein::qgaussian_from_json(bad), std::invalid_argument);
}
