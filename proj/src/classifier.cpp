// SPDX-License-Identifier: Apache-2.0
#include "kish/classifier.hpp"

#include <cmath>

#include "kish/errors.hpp"
#include "kish/metering.hpp"
#include "kish/seed.hpp"

namespace kish {

ProtocolParams make_protocol_params(const RingParams& ring, std::uint64_t k, std::uint32_t repetitions,
                                    std::uint64_t rng_seed) {
  ProtocolParams pp;
  pp.ring = ring;
  pp.k = k;
  pp.n = ring.n;
  pp.repetitions = repetitions;
  pp.rng_seed = rng_seed;
  if (k == 0 || k >= ring.n) throw ParameterError("k must satisfy 1 <= k < n");
  pp.z_k = std::lround(phi_inverse(static_cast<double>(k) / static_cast<double>(ring.n)));
  validate(pp);
  return pp;
}

void validate(const ProtocolParams& pp) {
  validate(pp.ring);
  if (pp.k == 0 || pp.k >= pp.n) throw ParameterError("k must satisfy 1 <= k < n");
  if (pp.n != pp.ring.n) throw ParameterError("protocol n differs from ring n");
  if (pp.repetitions % 2 == 0) throw ParameterError("repetitions must be odd");
}

void validate(const LabeledDatabase& db, const RingParams& ring) {
  if (db.points.size() != db.labels.size()) throw ParameterError("points and labels differ in length");
  if (db.points.size() != ring.n) throw ParameterError("database size differs from ring n");
  for (std::size_t i = 0; i < db.points.size(); ++i) {
    if (db.points[i].size() != ring.dim) throw ParameterError("database point has wrong dimension");
    for (std::uint64_t c : db.points[i]) {
      if (c >= ring.coord_bound) throw RangeError("database coordinate outside the grid");
    }
    if (db.labels[i] > 1) throw ParameterError("labels must be 0 or 1");
  }
}

CoinSpec mu_coin(const ProtocolParams& pp) {
  return {CoinFunction::identity, pp.n, derive_seed(pp.rng_seed, "mu", 0)};
}

CoinSpec mu2_low_coin(const ProtocolParams& pp) {
  return {CoinFunction::square, pp.n, derive_seed(pp.rng_seed, "mu2_low", 0)};
}

CoinSpec mu2_high_coin(const ProtocolParams& pp) {
  return {CoinFunction::square, pp.n * pp.ring.coord_bound, derive_seed(pp.rng_seed, "mu2_high", 0)};
}

he::Cipher estimate_mu(const he::Backend& backend, const NamedTables& tables, std::span<const he::Cipher> xs,
                       const ProtocolParams& pp) {
  return prob_avg(backend, tables, xs, mu_coin(pp));
}

std::pair<he::Cipher, he::Cipher> estimate_mu2_digits(const he::Backend& backend, const NamedTables& tables,
                                                      std::span<const he::Cipher> xs, const ProtocolParams& pp) {
  // The low digit's coin saturates whenever x^2 > n; the ring reduction of
  // the sum is the only modulo applied.
  return {prob_avg(backend, tables, xs, mu2_low_coin(pp)), prob_avg(backend, tables, xs, mu2_high_coin(pp))};
}

std::pair<he::Cipher, he::Cipher> square_mu_digits(const he::Backend& backend, const NamedTables& tables,
                                                   const he::Cipher& mu_star) {
  return {backend.mul(mu_star, mu_star), eval_poly_ps(backend, tables.square_div_p, mu_star)};
}

he::Cipher estimate_sigma(const he::Backend& backend, const NamedTables& tables, const SigmaDigits& sd) {
  const he::Cipher dh = backend.sub(sd.mu2_high, sd.musq_high);
  const he::Cipher dl = backend.sub(sd.mu2_low, sd.musq_low);

  const PolyTable* on_dh[] = {&tables.is_zero, &tables.sqrt_times_p};
  const PolyTable* on_dl[] = {&tables.sqrt, &tables.sqrt_plus_p};
  const auto h = eval_poly_ps(backend, on_dh, dh);
  const auto l = eval_poly_ps(backend, on_dl, dl);
  const he::Cipher s1 = eval_poly_ps(backend, tables.is_zero, backend.sub(dh, 1));
  const he::Cipher& s0 = h[0];
  const he::Cipher& wide = h[1];

  // s0 a + s1 b + (1 - s0 - s1) c  ==  c + s0 (a - c) + s1 (b - c)
  const he::Cipher case0 = backend.mul(s0, backend.sub(l[0], wide));
  const he::Cipher case1 = backend.mul(s1, backend.sub(l[1], wide));
  return backend.add(backend.add(wide, case0), case1);
}

he::Cipher threshold(const he::Backend& backend, const he::Cipher& mu_star, const he::Cipher& sigma_star,
                     const ProtocolParams& pp) {
  return backend.add(mu_star, backend.mul(sigma_star, pp.ring.embed(pp.z_k)));
}

std::pair<he::Cipher, he::Cipher> count_classes(const he::Backend& backend, const NamedTables& tables,
                                                std::span<const he::Cipher> xs, const he::Cipher& t_star,
                                                std::span<const std::uint8_t> labels) {
  if (xs.size() != labels.size()) throw ParameterError("distances and labels differ in length");
  // A negative T* would push x - T* past modulus / 2 for far points and make
  // them look close. Distances are non-negative, so max(T*, 0) selects the
  // same set while keeping every comparison in range.
  const he::Cipher negative = eval_poly_ps(backend, tables.is_neg, t_star);
  const he::Cipher t_clamped = backend.sub(t_star, backend.mul(negative, t_star));

  std::vector<he::Cipher> below(xs.size());
  parallel_for(xs.size(), [&](std::size_t i) { below[i] = is_smaller(backend, tables, xs[i], t_clamped); });

  std::vector<std::uint64_t> is_one(labels.begin(), labels.end());
  std::vector<std::uint64_t> is_zero(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) is_zero[i] = 1 - is_one[i];
  return {backend.linear_combination(below, is_zero, 0), backend.linear_combination(below, is_one, 0)};
}

he::Cipher server_classify(const he::Backend& backend, std::span<const he::Cipher> enc_q, const LabeledDatabase& db,
                           const ProtocolParams& pp, ServerTrace* trace) {
  validate(pp);
  if (!(backend.ring() == pp.ring)) throw ParameterError("backend ring differs from protocol ring");
  validate(db, pp.ring);
  if (enc_q.size() != pp.ring.dim) throw ParameterError("query has wrong dimension");
  const auto tables = named_tables(pp.ring);

  std::vector<he::Cipher> dist(db.size());
  parallel_for(db.size(), [&](std::size_t i) { dist[i] = compute_dist_l1(backend, *tables, enc_q, db.points[i]); });

  const he::Cipher mu = estimate_mu(backend, *tables, dist, pp);
  const auto [mu2_low, mu2_high] = estimate_mu2_digits(backend, *tables, dist, pp);
  const auto [musq_low, musq_high] = square_mu_digits(backend, *tables, mu);
  const SigmaDigits digits{mu2_low, mu2_high, musq_low, musq_high};
  const he::Cipher sigma = estimate_sigma(backend, *tables, digits);
  const he::Cipher t_star = threshold(backend, mu, sigma, pp);
  const auto [c0, c1] = count_classes(backend, *tables, dist, t_star, db.labels);
  he::Cipher result = is_smaller(backend, *tables, c0, c1);

  if (trace != nullptr) *trace = ServerTrace{std::move(dist), mu, digits, sigma, t_star, c0, c1};
  return result;
}

ProtocolParams repetition_params(const ProtocolParams& pp, std::uint32_t rep) {
  ProtocolParams out = pp;
  out.rng_seed = derive_seed(pp.rng_seed, "repetition", rep);
  return out;
}

std::uint64_t majority(std::span<const std::uint64_t> bits) {
  std::size_t ones = 0;
  for (std::uint64_t b : bits) ones += b == 1 ? 1 : 0;
  return 2 * ones > bits.size() ? 1 : 0;
}

std::uint64_t classify_with_majority(const he::KeyPair& keys, std::span<const std::uint64_t> query,
                                     const LabeledDatabase& db, const ProtocolParams& pp) {
  validate(pp);
  if (query.size() != pp.ring.dim) throw ParameterError("query has wrong dimension");
  const he::MockBackend backend(keys.pk);
  std::vector<std::uint64_t> bits;
  for (std::uint32_t rep = 0; rep < pp.repetitions; ++rep) {
    std::vector<he::Cipher> enc_q;
    for (std::uint64_t c : query) {
      if (c >= pp.ring.coord_bound) throw RangeError("query coordinate outside the grid");
      enc_q.push_back(he::encrypt(keys.pk, c));
    }
    bits.push_back(he::decrypt(keys.sk, server_classify(backend, enc_q, db, repetition_params(pp, rep))));
  }
  return majority(bits);
}

}  // namespace kish
