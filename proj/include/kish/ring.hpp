// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace kish {

/// Parameters of the evaluation ring Z_modulus shared by client and server.
///
/// Coordinates live in [0, coord_bound), L1 distances in [0, dist_bound], and
/// modulus > 2 * dist_bound so that every difference of two in-range values is
/// unambiguous under the "upper half is negative" convention.
struct RingParams {
  std::uint64_t modulus = 0;
  std::uint64_t coord_bound = 0;
  std::uint32_t dim = 0;
  std::uint64_t dist_bound = 0;
  std::uint64_t n = 0;

  /// Ring embedding of a signed integer: negative v maps to modulus - |v|.
  std::uint64_t embed(std::int64_t v) const noexcept;

  bool operator==(const RingParams&) const = default;
};

/// Base-p digits of v < p^2.
struct DigitPair {
  std::uint64_t low = 0;
  std::uint64_t high = 0;

  bool operator==(const DigitPair&) const = default;
};

namespace zp {

inline std::uint64_t add(std::uint64_t a, std::uint64_t b, std::uint64_t m) noexcept {
  const std::uint64_t s = a + b;
  return (s >= m || s < a) ? s - m : s;
}

inline std::uint64_t sub(std::uint64_t a, std::uint64_t b, std::uint64_t m) noexcept {
  return a >= b ? a - b : a + (m - b);
}

inline std::uint64_t mul(std::uint64_t a, std::uint64_t b, std::uint64_t m) noexcept {
  if ((a | b) >> 32 == 0) return (a * b) % m;
  return static_cast<std::uint64_t>(static_cast<unsigned __int128>(a) * b % m);
}

std::uint64_t pow(std::uint64_t base, std::uint64_t exp, std::uint64_t m) noexcept;

/// Inverse of a nonzero a modulo a prime m (Fermat).
std::uint64_t inv(std::uint64_t a, std::uint64_t m);

}  // namespace zp

/// Deterministic Miller-Rabin, exact for all 64-bit inputs.
bool is_prime(std::uint64_t v) noexcept;

/// Smallest prime strictly greater than v.
std::uint64_t next_prime_above(std::uint64_t v);

/// Ring for a grid of side grid_size in dim dimensions: modulus is the smallest
/// prime above 2 * dim * (grid_size - 1). Throws ParameterError on bad input.
RingParams select_ring_params(std::uint64_t grid_size, std::uint32_t dim, std::uint64_t n);

/// Throws ParameterError if the invariants of RingParams do not hold.
void validate(const RingParams& params);

/// Throws RangeError unless 0 <= v < coord_bound^2.
DigitPair base_p_decompose(std::uint64_t v, const RingParams& params);

/// Standard normal CDF.
double phi(double z) noexcept;

/// Standard normal quantile for q in (0, 1); DomainError otherwise.
double phi_inverse(double q);

/// Integer square root, floor(sqrt(v)).
std::uint64_t isqrt(std::uint64_t v) noexcept;

/// Nearest integer to sqrt(v), ties impossible for integer v.
std::uint64_t round_sqrt(std::uint64_t v) noexcept;

}  // namespace kish
