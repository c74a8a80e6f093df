// SPDX-License-Identifier: Apache-2.0
#include "kish/ring.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "kish/errors.hpp"

namespace kish {

std::uint64_t RingParams::embed(std::int64_t v) const noexcept {
  const auto m = static_cast<std::int64_t>(modulus);
  std::int64_t r = v % m;
  if (r < 0) r += m;
  return static_cast<std::uint64_t>(r);
}

namespace zp {

std::uint64_t pow(std::uint64_t base, std::uint64_t exp, std::uint64_t m) noexcept {
  std::uint64_t result = 1 % m;
  base %= m;
  while (exp != 0) {
    if (exp & 1U) result = mul(result, base, m);
    base = mul(base, base, m);
    exp >>= 1U;
  }
  return result;
}

std::uint64_t inv(std::uint64_t a, std::uint64_t m) {
  if (a % m == 0) throw DomainError("zero has no inverse");
  return pow(a, m - 2, m);
}

}  // namespace zp

bool is_prime(std::uint64_t v) noexcept {
  if (v < 2) return false;
  static constexpr std::array<std::uint64_t, 12> kBases = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  for (std::uint64_t p : kBases) {
    if (v % p == 0) return v == p;
  }
  std::uint64_t d = v - 1;
  int s = 0;
  while ((d & 1U) == 0) {
    d >>= 1U;
    ++s;
  }
  for (std::uint64_t a : kBases) {
    std::uint64_t x = zp::pow(a, d, v);
    if (x == 1 || x == v - 1) continue;
    bool composite = true;
    for (int r = 1; r < s; ++r) {
      x = zp::mul(x, x, v);
      if (x == v - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

std::uint64_t next_prime_above(std::uint64_t v) {
  for (std::uint64_t c = v + 1; c > v; ++c) {
    if (is_prime(c)) return c;
  }
  throw RangeError("no 64-bit prime above " + std::to_string(v));
}

RingParams select_ring_params(std::uint64_t grid_size, std::uint32_t dim, std::uint64_t n) {
  if (grid_size < 2) throw ParameterError("grid size must be at least 2");
  if (dim < 1) throw ParameterError("dimension must be at least 1");
  if (n < 1) throw ParameterError("database size must be at least 1");
  if (grid_size - 1 > std::numeric_limits<std::uint64_t>::max() / 4 / dim) {
    throw ParameterError("grid too large for a 64-bit ring");
  }
  RingParams params;
  params.coord_bound = grid_size;
  params.dim = dim;
  params.dist_bound = static_cast<std::uint64_t>(dim) * (grid_size - 1);
  params.n = n;
  params.modulus = next_prime_above(2 * params.dist_bound);
  return params;
}

void validate(const RingParams& params) {
  if (params.coord_bound < 2) throw ParameterError("coord_bound must be at least 2");
  if (params.dim < 1) throw ParameterError("dim must be at least 1");
  if (params.n < 1) throw ParameterError("n must be at least 1");
  if (params.dist_bound != static_cast<std::uint64_t>(params.dim) * (params.coord_bound - 1)) {
    throw ParameterError("dist_bound must equal dim * (coord_bound - 1)");
  }
  if (params.modulus <= 2 * params.dist_bound) throw ParameterError("modulus must exceed 2 * dist_bound");
  if (!is_prime(params.modulus)) throw ParameterError("modulus must be prime");
}

DigitPair base_p_decompose(std::uint64_t v, const RingParams& params) {
  const std::uint64_t p = params.coord_bound;
  if (p == 0 || v / p >= p) {
    throw RangeError("value " + std::to_string(v) + " outside [0, coord_bound^2)");
  }
  return {v % p, v / p};
}

double phi(double z) noexcept { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double phi_inverse(double q) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("quantile argument must lie in (0, 1)");

  // Acklam's rational approximation (relative error ~1.15e-9).
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double kLow = 0.02425;

  double z;
  if (q < kLow) {
    const double t = std::sqrt(-2.0 * std::log(q));
    z = (((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5]) /
        ((((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1.0);
  } else if (q <= 1.0 - kLow) {
    const double t = q - 0.5;
    const double r = t * t;
    z = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * t /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double t = std::sqrt(-2.0 * std::log1p(-q));
    z = -(((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5]) /
        ((((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1.0);
  }

  // One Halley refinement step.
  const double e = phi(z) - q;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(z * z / 2.0);
  return z - u / (1.0 + z * u / 2.0);
}

std::uint64_t isqrt(std::uint64_t v) noexcept {
  if (v == 0) return 0;
  auto r = static_cast<std::uint64_t>(std::sqrt(static_cast<double>(v)));
  while (r > 0 && (r > v / r)) --r;
  while ((r + 1) <= v / (r + 1)) ++r;
  return r;
}

std::uint64_t round_sqrt(std::uint64_t v) noexcept {
  const std::uint64_t r = isqrt(v);
  // sqrt(v) >= r + 1/2  <=>  v >= r^2 + r + 1 for integer v
  return (v - r * r > r) ? r + 1 : r;
}

}  // namespace kish
