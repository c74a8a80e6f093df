// SPDX-License-Identifier: Apache-2.0
#include "kish/he.hpp"

#include <algorithm>
#include <atomic>
#include <limits>
#include <string>

#include "cipher_access.hpp"
#include "kish/errors.hpp"
#include "kish/metering.hpp"
#include "kish/seed.hpp"

namespace kish::he {

using detail::CipherAccess;

namespace {

std::atomic<std::uint64_t> g_decrypt_calls{0};

std::uint16_t next_depth(std::uint16_t a, std::uint16_t b) {
  const std::uint16_t d = std::max(a, b);
  if (d == std::numeric_limits<std::uint16_t>::max()) throw RangeError("multiplicative depth overflow");
  return static_cast<std::uint16_t>(d + 1);
}

Cipher emit(std::uint64_t value, std::uint16_t depth, std::uint64_t key_id, std::uint64_t mults,
            std::uint64_t adds) noexcept {
  kish::detail::record_gate(mults, adds, depth);
  return CipherAccess::make(value, depth, key_id);
}

}  // namespace

KeyPair keygen(const RingParams& ring, std::uint64_t seed) {
  validate(ring);
  std::uint64_t key_id = mix64(seed ^ 0x6b6973682d6b6579ULL);
  if (key_id == 0) key_id = 1;  // 0 marks a default-constructed Cipher
  const std::uint64_t token = mix64(key_id + seed);
  return KeyPair{PublicKey{key_id, ring}, SecretKey{key_id, token, ring}};
}

Cipher encrypt(const PublicKey& pk, std::uint64_t m) {
  if (m >= pk.ring.modulus) {
    throw RangeError("plaintext " + std::to_string(m) + " not reduced mod " + std::to_string(pk.ring.modulus));
  }
  return emit(m, 0, pk.key_id, 0, 0);
}

std::uint64_t decrypt(const SecretKey& sk, const Cipher& c) {
  g_decrypt_calls.fetch_add(1, std::memory_order_relaxed);
  if (c.key_id() != sk.key_id_) throw KeyError("ciphertext key does not match secret key");
  return CipherAccess::value(c);
}

std::uint64_t decrypt_call_count() noexcept { return g_decrypt_calls.load(); }

Cipher Backend::sum(std::span<const Cipher> terms) const {
  if (terms.empty()) throw ParameterError("sum of zero ciphertexts");
  Cipher acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

MockBackend::MockBackend(PublicKey pk) : pk_(std::move(pk)) { validate(pk_.ring); }

void MockBackend::check(const Cipher& c) const {
  if (c.key_id() != pk_.key_id) throw KeyError("ciphertext key does not match evaluation key");
}

void MockBackend::check_plain(std::uint64_t m) const {
  if (m >= pk_.ring.modulus) throw RangeError("plaintext operand not reduced");
}

Cipher MockBackend::encrypt(std::uint64_t m) const { return he::encrypt(pk_, m); }

Cipher MockBackend::add(const Cipher& a, const Cipher& b) const {
  check(a);
  check(b);
  const auto v = zp::add(CipherAccess::value(a), CipherAccess::value(b), pk_.ring.modulus);
  return emit(v, std::max(a.depth(), b.depth()), pk_.key_id, 0, 1);
}

Cipher MockBackend::add(const Cipher& a, std::uint64_t b) const {
  check(a);
  check_plain(b);
  return emit(zp::add(CipherAccess::value(a), b, pk_.ring.modulus), a.depth(), pk_.key_id, 0, 1);
}

Cipher MockBackend::sub(const Cipher& a, const Cipher& b) const {
  check(a);
  check(b);
  const auto v = zp::sub(CipherAccess::value(a), CipherAccess::value(b), pk_.ring.modulus);
  return emit(v, std::max(a.depth(), b.depth()), pk_.key_id, 0, 1);
}

Cipher MockBackend::sub(const Cipher& a, std::uint64_t b) const {
  check(a);
  check_plain(b);
  return emit(zp::sub(CipherAccess::value(a), b, pk_.ring.modulus), a.depth(), pk_.key_id, 0, 1);
}

Cipher MockBackend::sub(std::uint64_t a, const Cipher& b) const {
  check(b);
  check_plain(a);
  return emit(zp::sub(a, CipherAccess::value(b), pk_.ring.modulus), b.depth(), pk_.key_id, 0, 1);
}

Cipher MockBackend::mul(const Cipher& a, const Cipher& b) const {
  check(a);
  check(b);
  const auto v = zp::mul(CipherAccess::value(a), CipherAccess::value(b), pk_.ring.modulus);
  return emit(v, next_depth(a.depth(), b.depth()), pk_.key_id, 1, 0);
}

Cipher MockBackend::mul(const Cipher& a, std::uint64_t b) const {
  check(a);
  check_plain(b);
  return emit(zp::mul(CipherAccess::value(a), b, pk_.ring.modulus), a.depth(), pk_.key_id, 0, 0);
}

Cipher MockBackend::linear_combination(std::span<const Cipher> terms, std::span<const std::uint64_t> coeffs,
                                       std::uint64_t constant) const {
  if (terms.size() != coeffs.size()) throw ParameterError("linear_combination: size mismatch");
  check_plain(constant);
  const std::uint64_t m = pk_.ring.modulus;
  std::uint16_t depth = 0;
  std::uint64_t acc = constant;
  if (m <= (1ULL << 32)) {
    // Products fit in 64 bits; accumulate in 128 bits and reduce once.
    unsigned __int128 wide = constant;
    for (std::size_t i = 0; i < terms.size(); ++i) {
      check(terms[i]);
      check_plain(coeffs[i]);
      wide += static_cast<unsigned __int128>(CipherAccess::value(terms[i]) * coeffs[i]);
      depth = std::max(depth, terms[i].depth());
    }
    acc = static_cast<std::uint64_t>(wide % m);
  } else {
    for (std::size_t i = 0; i < terms.size(); ++i) {
      check(terms[i]);
      check_plain(coeffs[i]);
      acc = zp::add(acc, zp::mul(CipherAccess::value(terms[i]), coeffs[i], m), m);
      depth = std::max(depth, terms[i].depth());
    }
  }
  return emit(acc, depth, pk_.key_id, 0, terms.size());
}

std::unique_ptr<Backend> make_backend(BackendKind kind, const PublicKey& pk) {
  switch (kind) {
    case BackendKind::mock:
      return std::make_unique<MockBackend>(pk);
    case BackendKind::lattice:
      break;
  }
  throw ParameterError("lattice backend is not available in this build");
}

}  // namespace kish::he
