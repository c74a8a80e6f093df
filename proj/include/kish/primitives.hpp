// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "kish/he.hpp"
#include "kish/interp.hpp"

namespace kish {

/// Increasing functions a coin can be biased by.
enum class CoinFunction { identity, square };

struct CoinSpec {
  CoinFunction f = CoinFunction::identity;
  std::uint64_t m = 1;  // probability denominator
  std::uint64_t rng_seed = 0;
};

std::uint64_t apply(CoinFunction f, std::uint64_t x) noexcept;

/// ceil(f^-1(r)), exact in integers.
std::uint64_t ceil_inverse(CoinFunction f, std::uint64_t r) noexcept;

/// Uniform integer in [lo, hi] by rejection on the raw 64-bit output, so the
/// sequence is the same on every standard library.
std::uint64_t uniform_int(std::mt19937_64& rng, std::uint64_t lo, std::uint64_t hi) noexcept;

/// Plaintext side of one coin: draws r uniform on {1..m} and returns the cut c
/// such that the coin is [c < x]. For integer x this is [f(x) >= r], so the
/// coin is 1 with probability min(f(x), m) / m. c is clamped to dist_bound so
/// the comparison stays inside the range where isNeg is exact.
std::uint64_t draw_coin_cut(const CoinSpec& spec, const RingParams& ring, std::mt19937_64& rng);

/// Encrypted sum of |q_i - s_i|. q and s must have the ring's dimension.
he::Cipher compute_dist_l1(const he::Backend& backend, const NamedTables& tables, std::span<const he::Cipher> q,
                           std::span<const std::uint64_t> s);

/// Doubly-blinded coin: an encrypted bit that is 1 with probability
/// min(f(x), m) / m over the draw. Seeds its own generator from spec.rng_seed.
he::Cipher coin_toss(const he::Backend& backend, const NamedTables& tables, const he::Cipher& x,
                     const CoinSpec& spec);
he::Cipher coin_toss(const he::Backend& backend, const NamedTables& tables, const he::Cipher& x,
                     const CoinSpec& spec, std::mt19937_64& rng);

/// Sum of one independent coin per input, an unbiased estimate of
/// (1/m) sum f(x_i) while every f(x_i) <= m. All cuts are drawn in order from
/// spec.rng_seed before the tosses run in parallel, so the result does not
/// depend on the thread count.
he::Cipher prob_avg(const he::Backend& backend, const NamedTables& tables, std::span<const he::Cipher> xs,
                    const CoinSpec& spec);

}  // namespace kish
