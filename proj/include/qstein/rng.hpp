#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include <boost/math/special_functions/erf.hpp>

namespace qstein {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// SplitMix64 finalizer (Vigna). Bijective on 64-bit words.
inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based generator: output n is mix64(key + (n+1)*golden), i.e. the
// SplitMix64 stream starting at `key`.  Child streams are derived by keyed
// hashing, so a batch can be filled by any number of workers (one child per
// draw) and the result never depends on the worker count.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix64(mix64(seed + kGolden) ^ (stream * 0xbf58476d1ce4e5b9ULL + 0x94d049bb133111ebULL))) {}

  // Independent child stream k.  Distinct (seed, stream, k) give unrelated streams.
  Rng split(std::uint64_t k) const {
    Rng child(*this);
    child.key_ = mix64(key_ ^ ((k + 1) * 0x94d049bb133111ebULL));
    child.n_ = 0;
    return child;
  }

  std::uint64_t next_u64() { return mix64(key_ + (++n_) * kGolden); }

  // A fresh 64-bit seed for child stream k, usable wherever a raw seed is
  // expected (e.g. batch sampling).
  std::uint64_t derive(std::uint64_t k) const {
    Rng c = split(k);
    return c.next_u64();
  }

  // Uniform on (0, 1), both ends excluded.
  double uniform() {
    return ((next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via the inverse CDF: one uniform per variate.  Pinned to
  // the inverse-CDF method because bit-exact reproducibility depends on the
  // number of uniforms each variate consumes.
  double normal() {
    constexpr double sqrt2 = 1.41421356237309504880168872420969808;
    return sqrt2 * boost::math::erf_inv(2.0 * uniform() - 1.0);
  }

  // Gamma(shape, 1) by Marsaglia–Tsang; shape < 1 handled by the usual
  // boosting trick G(a) = G(a+1) * U^(1/a).
  double gamma(double shape) {
    if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be > 0");
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      const double x = normal();
      const double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      const double v = t * t * t;
      const double u = uniform();
      const double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
      if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double beta(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("beta: shapes must be > 0");
    const double ga = gamma(a);
    const double gb = gamma(b);
    return ga / (ga + gb);
  }

 private:
  std::uint64_t key_;
  std::uint64_t n_ = 0;
};

}  // namespace qstein
