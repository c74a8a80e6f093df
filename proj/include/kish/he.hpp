// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <span>

#include "kish/ring.hpp"

namespace kish::he {

namespace detail {
struct CipherAccess;
}

/// A ciphertext over Z_modulus.
///
/// The plaintext value is not reachable through this interface; only
/// decrypt() with the matching secret key reveals it. depth() is the
/// multiplicative depth of the sub-circuit that produced the ciphertext.
class Cipher {
 public:
  Cipher() = default;

  std::uint16_t depth() const noexcept { return depth_; }
  std::uint64_t key_id() const noexcept { return key_id_; }

 private:
  friend struct detail::CipherAccess;
  Cipher(std::uint64_t value, std::uint16_t depth, std::uint64_t key_id) noexcept
      : value_(value), depth_(depth), key_id_(key_id) {}

  std::uint64_t value_ = 0;
  std::uint16_t depth_ = 0;
  std::uint64_t key_id_ = 0;
};

struct PublicKey {
  std::uint64_t key_id = 0;
  RingParams ring;

  bool operator==(const PublicKey&) const = default;
};

class SecretKey {
 public:
  SecretKey() = default;
  SecretKey(std::uint64_t key_id, std::uint64_t token, RingParams ring) noexcept
      : key_id_(key_id), token_(token), ring_(ring) {}

  std::uint64_t key_id() const noexcept { return key_id_; }
  const RingParams& ring() const noexcept { return ring_; }

 private:
  friend std::uint64_t decrypt(const SecretKey& sk, const Cipher& c);
  std::uint64_t key_id_ = 0;
  std::uint64_t token_ = 0;
  RingParams ring_;
};

struct KeyPair {
  PublicKey pk;
  SecretKey sk;
};

/// Deterministic in seed; distinct seeds give distinct key ids.
KeyPair keygen(const RingParams& ring, std::uint64_t seed);

/// m must already be reduced (m < modulus), otherwise RangeError.
Cipher encrypt(const PublicKey& pk, std::uint64_t m);

/// KeyError if c was not produced under sk's key pair.
std::uint64_t decrypt(const SecretKey& sk, const Cipher& c);

/// Process-wide number of decrypt() calls, for obliviousness checks.
std::uint64_t decrypt_call_count() noexcept;

/// Evaluation interface seen by the server. Holds only public material.
///
/// Plaintext operands must be reduced mod the ring modulus. Depth rules:
/// add/sub take the max operand depth, cipher*cipher is max + 1 and counts one
/// mult gate, cipher*plaintext keeps the depth and is free.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual const PublicKey& public_key() const noexcept = 0;
  const RingParams& ring() const noexcept { return public_key().ring; }

  virtual Cipher encrypt(std::uint64_t m) const = 0;

  virtual Cipher add(const Cipher& a, const Cipher& b) const = 0;
  virtual Cipher add(const Cipher& a, std::uint64_t b) const = 0;
  virtual Cipher sub(const Cipher& a, const Cipher& b) const = 0;
  virtual Cipher sub(const Cipher& a, std::uint64_t b) const = 0;
  virtual Cipher sub(std::uint64_t a, const Cipher& b) const = 0;
  virtual Cipher mul(const Cipher& a, const Cipher& b) const = 0;
  virtual Cipher mul(const Cipher& a, std::uint64_t b) const = 0;

  /// constant + sum_i coeffs[i] * terms[i]; terms.size() add gates, no mult gates.
  virtual Cipher linear_combination(std::span<const Cipher> terms, std::span<const std::uint64_t> coeffs,
                                    std::uint64_t constant) const = 0;

  /// Sum of terms; terms must be non-empty.
  Cipher sum(std::span<const Cipher> terms) const;
};

/// Exact evaluation in Z_modulus with depth and gate metering; no noise model
/// and no hardness.
class MockBackend final : public Backend {
 public:
  explicit MockBackend(PublicKey pk);

  const PublicKey& public_key() const noexcept override { return pk_; }

  Cipher encrypt(std::uint64_t m) const override;
  Cipher add(const Cipher& a, const Cipher& b) const override;
  Cipher add(const Cipher& a, std::uint64_t b) const override;
  Cipher sub(const Cipher& a, const Cipher& b) const override;
  Cipher sub(const Cipher& a, std::uint64_t b) const override;
  Cipher sub(std::uint64_t a, const Cipher& b) const override;
  Cipher mul(const Cipher& a, const Cipher& b) const override;
  Cipher mul(const Cipher& a, std::uint64_t b) const override;
  Cipher linear_combination(std::span<const Cipher> terms, std::span<const std::uint64_t> coeffs,
                            std::uint64_t constant) const override;

 private:
  void check(const Cipher& c) const;
  void check_plain(std::uint64_t m) const;

  PublicKey pk_;
};

enum class BackendKind { mock, lattice };

/// The lattice slot is reserved for a real-HE adapter and currently throws
/// ParameterError.
std::unique_ptr<Backend> make_backend(BackendKind kind, const PublicKey& pk);

}  // namespace kish::he
