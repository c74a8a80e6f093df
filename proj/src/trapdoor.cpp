// SPDX-License-Identifier: Apache-2.0
// Built twice: with KISH_TEST_BUILD for the test suite, without it for
// shipped binaries, where every entry point refuses to run.
#include "kish/classifier.hpp"
#include "kish/errors.hpp"

#ifdef KISH_TEST_BUILD
#include "cipher_access.hpp"
#endif

namespace kish::trapdoor {

#ifdef KISH_TEST_BUILD

bool enabled() noexcept { return true; }

std::uint64_t peek(const he::Cipher& c) { return he::detail::CipherAccess::value(c); }

std::uint64_t kappa_of_run(const LabeledDatabase& db, std::span<const std::uint64_t> query, const ProtocolParams& pp,
                           std::uint64_t seed) {
  ProtocolParams run = pp;
  run.rng_seed = seed;
  const he::KeyPair keys = he::keygen(pp.ring, seed);
  const he::MockBackend backend(keys.pk);
  std::vector<he::Cipher> enc_q;
  for (std::uint64_t c : query) enc_q.push_back(backend.encrypt(c));
  ServerTrace trace;
  (void)server_classify(backend, enc_q, db, run, &trace);

  // Same test the circuit applies: dist < T  iff  dist - T is in the upper half.
  const std::uint64_t m = pp.ring.modulus;
  const std::uint64_t t = peek(trace.threshold);
  std::uint64_t kappa = 0;
  for (const he::Cipher& d : trace.distances) kappa += 2 * zp::sub(peek(d), t, m) > m ? 1 : 0;
  return kappa;
}

std::uint64_t count_saturated(std::span<const he::Cipher> xs, const CoinSpec& spec) {
  std::uint64_t count = 0;
  for (const he::Cipher& x : xs) count += apply(spec.f, peek(x)) > spec.m ? 1 : 0;
  return count;
}

#else

namespace {
[[noreturn]] void refuse() { throw Error("trapdoor diagnostics are only available in test builds"); }
}  // namespace

bool enabled() noexcept { return false; }
std::uint64_t peek(const he::Cipher&) { refuse(); }
std::uint64_t kappa_of_run(const LabeledDatabase&, std::span<const std::uint64_t>, const ProtocolParams&,
                           std::uint64_t) {
  refuse();
}
std::uint64_t count_saturated(std::span<const he::Cipher>, const CoinSpec&) { refuse(); }

#endif

}  // namespace kish::trapdoor
