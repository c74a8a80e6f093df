// SPDX-License-Identifier: Apache-2.0
#include "kish/primitives.hpp"

#include <algorithm>
#include <limits>
#include <vector>

#include "kish/errors.hpp"
#include "kish/metering.hpp"

namespace kish {

std::uint64_t apply(CoinFunction f, std::uint64_t x) noexcept {
  return f == CoinFunction::square ? x * x : x;
}

std::uint64_t ceil_inverse(CoinFunction f, std::uint64_t r) noexcept {
  if (f == CoinFunction::identity || r == 0) return r;
  return isqrt(r - 1) + 1;
}

std::uint64_t uniform_int(std::mt19937_64& rng, std::uint64_t lo, std::uint64_t hi) noexcept {
  const std::uint64_t span = hi - lo;
  if (span == std::numeric_limits<std::uint64_t>::max()) return rng();
  const std::uint64_t range = span + 1;
  // Largest multiple of range that fits; values at or above it are rejected.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t v = rng();
  while (v >= limit) v = rng();
  return lo + v % range;
}

std::uint64_t draw_coin_cut(const CoinSpec& spec, const RingParams& ring, std::mt19937_64& rng) {
  if (spec.m == 0) throw ParameterError("coin denominator m must be positive");
  const std::uint64_t r = uniform_int(rng, 1, spec.m);
  return std::min(ceil_inverse(spec.f, r), ring.dist_bound + 1) - 1;
}

he::Cipher compute_dist_l1(const he::Backend& backend, const NamedTables& tables, std::span<const he::Cipher> q,
                           std::span<const std::uint64_t> s) {
  const RingParams& ring = backend.ring();
  if (q.size() != s.size() || q.size() != ring.dim) throw ParameterError("distance operands must have the ring dimension");
  std::vector<he::Cipher> terms;
  terms.reserve(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (s[i] >= ring.coord_bound) throw RangeError("database coordinate outside the grid");
    // |a - b| = (1 - 2[a < b]) (a - b)
    const he::Cipher diff = backend.sub(q[i], s[i]);
    const he::Cipher below = is_smaller(backend, tables, q[i], s[i]);
    const he::Cipher flip = backend.mul(backend.mul(below, diff), 2);
    terms.push_back(backend.sub(diff, flip));
  }
  return backend.sum(terms);
}

he::Cipher coin_toss(const he::Backend& backend, const NamedTables& tables, const he::Cipher& x,
                     const CoinSpec& spec, std::mt19937_64& rng) {
  return is_smaller(backend, tables, draw_coin_cut(spec, backend.ring(), rng), x);
}

he::Cipher coin_toss(const he::Backend& backend, const NamedTables& tables, const he::Cipher& x,
                     const CoinSpec& spec) {
  std::mt19937_64 rng(spec.rng_seed);
  return coin_toss(backend, tables, x, spec, rng);
}

he::Cipher prob_avg(const he::Backend& backend, const NamedTables& tables, std::span<const he::Cipher> xs,
                    const CoinSpec& spec) {
  if (xs.empty()) throw ParameterError("prob_avg needs at least one input");
  std::mt19937_64 rng(spec.rng_seed);
  std::vector<std::uint64_t> cuts(xs.size());
  for (auto& c : cuts) c = draw_coin_cut(spec, backend.ring(), rng);

  std::vector<he::Cipher> coins(xs.size());
  parallel_for(xs.size(), [&](std::size_t i) { coins[i] = is_smaller(backend, tables, cuts[i], xs[i]); });
  return backend.sum(coins);
}

}  // namespace kish
