// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "kish/he.hpp"
#include "kish/ring.hpp"

namespace kish {

/// Coefficient table of the unique polynomial of degree < modulus that agrees
/// with a function at every point of Z_modulus. coeffs[i] multiplies x^i.
struct PolyTable {
  std::uint64_t modulus = 0;
  std::vector<std::uint64_t> coeffs;
  std::string name;

  /// Paterson-Stockmeyer block size, ceil(sqrt(modulus)).
  std::uint64_t block_size() const noexcept;
  /// Number of coefficient blocks, ceil(modulus / block_size).
  std::uint64_t block_count() const noexcept;

  /// Plaintext Horner evaluation.
  std::uint64_t eval(std::uint64_t x) const noexcept;
};

/// f(x) for x in [0, modulus); results are reduced into the ring (negative
/// values allowed).
using IntFunction = std::function<std::int64_t(std::uint64_t)>;

/// Interpolates f over Z_modulus from the Lagrange basis with modular inverses.
/// O(modulus^2) plaintext work.
PolyTable lagrange_table(std::uint64_t modulus, const IntFunction& f, std::string name);

/// Powers x, x^2, ..., x^b and y^1..y^{g-1} with y = x^b, built by balanced
/// products so each power x^i has depth ceil(log2 i) above x.
class PowerBasis {
 public:
  PowerBasis(const he::Backend& backend, const he::Cipher& x);

  /// Evaluates table at x. Mult gates: at most block_count - 1 beyond the basis.
  he::Cipher evaluate(const PolyTable& table) const;

 private:
  const he::Backend& backend_;
  std::uint64_t block_size_;
  std::uint64_t block_count_;
  std::vector<he::Cipher> baby_;   // baby_[i] = x^(i+1), i < block_size
  std::vector<he::Cipher> giant_;  // giant_[j] = y^(j+1), j + 1 < block_count
};

/// Low-depth evaluation of table at an encrypted point.
/// mult_gates <= 3 * ceil(sqrt(modulus)); depth <= ceil(log2 modulus) + 3 above x.
he::Cipher eval_poly_ps(const he::Backend& backend, const PolyTable& table, const he::Cipher& x);

/// Several tables at the same point, sharing one power basis.
std::vector<he::Cipher> eval_poly_ps(const he::Backend& backend, std::span<const PolyTable* const> tables,
                                     const he::Cipher& x);

/// The six interpolated helpers used by the classifier circuit.
///
/// The square-root family reads x in the upper half of the ring as the
/// negative number x - modulus and returns 0 where the radicand is negative.
struct NamedTables {
  RingParams ring;
  PolyTable sqrt;          // round(sqrt(x))
  PolyTable square_div_p;  // round(x^2 / coord_bound)
  PolyTable is_zero;       // [x == 0]
  PolyTable sqrt_plus_p;   // round(sqrt(x + coord_bound))
  PolyTable sqrt_times_p;  // round(sqrt(x * coord_bound))
  PolyTable is_neg;        // [x > modulus / 2]
};

NamedTables build_named_tables(const RingParams& params);

/// Process-wide cache keyed by ring; tables are built once and never mutated.
std::shared_ptr<const NamedTables> named_tables(const RingParams& params);

/// [x < y] for values in [0, dist_bound], computed as isNeg(x - y).
he::Cipher is_smaller(const he::Backend& backend, const NamedTables& tables, const he::Cipher& x,
                      const he::Cipher& y);
he::Cipher is_smaller(const he::Backend& backend, const NamedTables& tables, const he::Cipher& x,
                      std::uint64_t y);
he::Cipher is_smaller(const he::Backend& backend, const NamedTables& tables, std::uint64_t x,
                      const he::Cipher& y);

/// Table cache file: "KTBL", u64 modulus, u64 name hash, then modulus
/// little-endian u64 coefficients.
void save_table(std::ostream& out, const PolyTable& table);
/// Throws DecodeError on a malformed stream or ParameterError if the stored
/// modulus/name hash differ from the expectation.
PolyTable load_table(std::istream& in, std::uint64_t expected_modulus, const std::string& name);

}  // namespace kish
