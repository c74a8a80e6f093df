// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "kish/he.hpp"
#include "kish/interp.hpp"
#include "kish/primitives.hpp"

namespace kish {

struct ProtocolParams {
  RingParams ring;
  std::uint64_t k = 0;
  std::uint64_t n = 0;
  std::int64_t z_k = 0;  // round(Phi^-1(k / n))
  std::uint32_t repetitions = 5;
  std::uint64_t rng_seed = 0;
};

/// n is taken from ring.n; z_k is derived. Throws ParameterError unless
/// 1 <= k < n and repetitions is odd.
ProtocolParams make_protocol_params(const RingParams& ring, std::uint64_t k, std::uint32_t repetitions,
                                    std::uint64_t rng_seed);
void validate(const ProtocolParams& pp);

struct LabeledDatabase {
  std::vector<std::vector<std::uint64_t>> points;
  std::vector<std::uint8_t> labels;

  std::size_t size() const noexcept { return points.size(); }
};

/// Throws ParameterError/RangeError if sizes, dimension or coordinates do not
/// fit the ring.
void validate(const LabeledDatabase& db, const RingParams& ring);

struct SigmaDigits {
  he::Cipher mu2_low;
  he::Cipher mu2_high;
  he::Cipher musq_low;
  he::Cipher musq_high;
};

/// Intermediate ciphertexts of one server run, for metering and diagnostics.
struct ServerTrace {
  std::vector<he::Cipher> distances;
  he::Cipher mu;
  SigmaDigits digits;
  he::Cipher sigma;
  he::Cipher threshold;
  he::Cipher c0;
  he::Cipher c1;
};

/// Coin specs used by the moment estimators, with seeds derived from
/// pp.rng_seed so each estimator draws from its own stream.
CoinSpec mu_coin(const ProtocolParams& pp);
CoinSpec mu2_low_coin(const ProtocolParams& pp);
CoinSpec mu2_high_coin(const ProtocolParams& pp);

he::Cipher estimate_mu(const he::Backend& backend, const NamedTables& tables, std::span<const he::Cipher> xs,
                       const ProtocolParams& pp);

/// (low, high) digit estimates of the second moment, from coins with m = n
/// and m = n * coord_bound.
std::pair<he::Cipher, he::Cipher> estimate_mu2_digits(const he::Backend& backend, const NamedTables& tables,
                                                      std::span<const he::Cipher> xs, const ProtocolParams& pp);

/// low = mu * mu in the ring, high = round(mu^2 / coord_bound) by table.
std::pair<he::Cipher, he::Cipher> square_mu_digits(const he::Backend& backend, const NamedTables& tables,
                                                   const he::Cipher& mu_star);

/// Oblivious three-case square root of mu2 - mu^2 from the digit differences
/// dh = high(mu2) - high(mu^2) and dl = low(mu2) - low(mu^2):
/// [dh = 0] sqrt(dl) + [dh = 1] sqrt(dl + p) + [dh >= 2] sqrt(dh * p).
he::Cipher estimate_sigma(const he::Backend& backend, const NamedTables& tables, const SigmaDigits& sd);

/// mu + z_k * sigma, using the ring embedding of a negative z_k.
he::Cipher threshold(const he::Backend& backend, const he::Cipher& mu_star, const he::Cipher& sigma_star,
                     const ProtocolParams& pp);

/// (C0, C1): how many label-0 and label-1 distances fall strictly below T.
/// Each comparison is evaluated once and feeds whichever count its label picks.
/// T in the lower half of the negative range is clamped to 0 first.
std::pair<he::Cipher, he::Cipher> count_classes(const he::Backend& backend, const NamedTables& tables,
                                                std::span<const he::Cipher> xs, const he::Cipher& t_star,
                                                std::span<const std::uint8_t> labels);

/// The full server circuit for one encrypted query. Returns an encrypted bit,
/// [C0 < C1]; a tie (including no neighbour below the threshold) gives 0.
he::Cipher server_classify(const he::Backend& backend, std::span<const he::Cipher> enc_q, const LabeledDatabase& db,
                           const ProtocolParams& pp, ServerTrace* trace = nullptr);

/// Parameters of repetition rep: same protocol, independent seed.
ProtocolParams repetition_params(const ProtocolParams& pp, std::uint32_t rep);

/// Majority of bits; ties go to 0.
std::uint64_t majority(std::span<const std::uint64_t> bits);

/// Client and server in one process: encrypts query, runs pp.repetitions
/// independent server runs, decrypts each bit and returns the majority.
std::uint64_t classify_with_majority(const he::KeyPair& keys, std::span<const std::uint64_t> query,
                                     const LabeledDatabase& db, const ProtocolParams& pp);

/// Diagnostics that read ciphertext values directly. Only available in test
/// builds; other builds throw Error.
namespace trapdoor {

bool enabled() noexcept;

/// Plaintext value of c, bypassing the secret key.
std::uint64_t peek(const he::Cipher& c);

/// kappa = |{i : dist_i < T*}| for one run with the given seed.
std::uint64_t kappa_of_run(const LabeledDatabase& db, std::span<const std::uint64_t> query, const ProtocolParams& pp,
                           std::uint64_t seed);

/// Number of inputs whose coin is pinned at probability 1 (f(x_i) > m).
std::uint64_t count_saturated(std::span<const he::Cipher> xs, const CoinSpec& spec);

}  // namespace trapdoor

}  // namespace kish
