// SPDX-License-Identifier: Apache-2.0
#include "kish/interp.hpp"

#include <array>
#include <bit>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <tuple>

#include "kish/errors.hpp"
#include "kish/seed.hpp"

namespace kish {

std::uint64_t PolyTable::block_size() const noexcept {
  std::uint64_t b = isqrt(modulus);
  if (b * b < modulus) ++b;
  return b;
}

std::uint64_t PolyTable::block_count() const noexcept {
  const std::uint64_t b = block_size();
  return b == 0 ? 0 : (modulus + b - 1) / b;
}

std::uint64_t PolyTable::eval(std::uint64_t x) const noexcept {
  std::uint64_t acc = 0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = zp::add(zp::mul(acc, x, modulus), *it, modulus);
  return acc;
}

PolyTable lagrange_table(std::uint64_t modulus, const IntFunction& f, std::string name) {
  if (!is_prime(modulus)) throw ParameterError("interpolation modulus must be prime");
  const std::uint64_t m = modulus;

  // master(x) = prod_j (x - j), degree m, built incrementally.
  std::vector<std::uint64_t> master(m + 1, 0);
  master[0] = 1;
  for (std::uint64_t j = 0; j < m; ++j) {
    const std::uint64_t neg_j = (m - j) % m;
    for (std::uint64_t k = j + 1; k > 0; --k) {
      master[k] = zp::add(master[k - 1], zp::mul(master[k], neg_j, m), m);
    }
    master[0] = zp::mul(master[0], neg_j, m);
  }

  PolyTable table{m, std::vector<std::uint64_t>(m, 0), std::move(name)};
  std::vector<std::uint64_t> quotient(m, 0);
  for (std::uint64_t i = 0; i < m; ++i) {
    const std::int64_t raw = f(i);
    const std::int64_t sm = static_cast<std::int64_t>(m);
    const std::uint64_t y = static_cast<std::uint64_t>(((raw % sm) + sm) % sm);
    if (y == 0) continue;

    // quotient = master / (x - i), by synthetic division.
    std::uint64_t carry = 0;
    for (std::uint64_t k = m; k > 0; --k) {
      carry = zp::add(master[k], zp::mul(carry, i, m), m);
      quotient[k - 1] = carry;
    }
    // Denominator prod_{j != i} (i - j) = quotient(i).
    std::uint64_t denom = 0;
    for (std::uint64_t k = m; k > 0; --k) denom = zp::add(zp::mul(denom, i, m), quotient[k - 1], m);
    const std::uint64_t scale = zp::mul(y, zp::inv(denom, m), m);
    for (std::uint64_t k = 0; k < m; ++k) {
      table.coeffs[k] = zp::add(table.coeffs[k], zp::mul(quotient[k], scale, m), m);
    }
  }
  return table;
}

namespace {

// Balanced product tree: power k = power ceil(k/2) * power floor(k/2).
std::vector<he::Cipher> balanced_powers(const he::Backend& backend, const he::Cipher& base, std::uint64_t count) {
  std::vector<he::Cipher> powers;
  powers.reserve(count);
  if (count == 0) return powers;
  powers.push_back(base);
  for (std::uint64_t k = 2; k <= count; ++k) {
    const std::uint64_t hi = (k + 1) / 2;
    const std::uint64_t lo = k / 2;
    powers.push_back(backend.mul(powers[hi - 1], powers[lo - 1]));
  }
  return powers;
}

}  // namespace

PowerBasis::PowerBasis(const he::Backend& backend, const he::Cipher& x) : backend_(backend) {
  PolyTable shape{backend.ring().modulus, {}, {}};
  block_size_ = shape.block_size();
  block_count_ = shape.block_count();
  baby_ = balanced_powers(backend, x, block_size_);
  if (block_count_ > 1) giant_ = balanced_powers(backend, baby_.back(), block_count_ - 1);
}

he::Cipher PowerBasis::evaluate(const PolyTable& table) const {
  if (table.modulus != backend_.ring().modulus) {
    throw ParameterError("table '" + table.name + "' modulus does not match ring");
  }
  const std::uint64_t b = block_size_;
  const std::span<const he::Cipher> powers(baby_.data(), b - 1);

  std::vector<he::Cipher> terms;
  terms.reserve(block_count_);
  std::vector<std::uint64_t> block(b - 1);
  for (std::uint64_t j = 0; j < block_count_; ++j) {
    const std::uint64_t first = j * b;
    const std::uint64_t constant = table.coeffs[first];
    bool has_power = false;
    for (std::uint64_t i = 1; i < b; ++i) {
      const std::uint64_t idx = first + i;
      block[i - 1] = idx < table.modulus ? table.coeffs[idx] : 0;
      has_power = has_power || block[i - 1] != 0;
    }
    if (j == 0) {
      terms.push_back(backend_.linear_combination(powers, block, constant));
      continue;
    }
    const he::Cipher& giant = giant_[j - 1];
    if (has_power) {
      terms.push_back(backend_.mul(backend_.linear_combination(powers, block, constant), giant));
    } else if (constant != 0) {
      terms.push_back(backend_.mul(giant, constant));
    }
  }
  return backend_.sum(terms);
}

he::Cipher eval_poly_ps(const he::Backend& backend, const PolyTable& table, const he::Cipher& x) {
  if (table.modulus != backend.ring().modulus) {
    throw ParameterError("table '" + table.name + "' modulus does not match ring");
  }
  return PowerBasis(backend, x).evaluate(table);
}

std::vector<he::Cipher> eval_poly_ps(const he::Backend& backend, std::span<const PolyTable* const> tables,
                                     const he::Cipher& x) {
  for (const PolyTable* t : tables) {
    if (t->modulus != backend.ring().modulus) {
      throw ParameterError("table '" + t->name + "' modulus does not match ring");
    }
  }
  const PowerBasis basis(backend, x);
  std::vector<he::Cipher> out;
  out.reserve(tables.size());
  for (const PolyTable* t : tables) out.push_back(basis.evaluate(*t));
  return out;
}

NamedTables build_named_tables(const RingParams& params) {
  validate(params);
  const std::uint64_t m = params.modulus;
  const std::uint64_t p = params.coord_bound;
  auto as_int = [](std::uint64_t v) { return static_cast<std::int64_t>(v); };

  // Upper-half arguments are negative differences; the square-root family
  // clamps them to 0 (or to sqrt(p + v) when that is still non-negative).
  auto signed_of = [m](std::uint64_t x) {
    return 2 * x > m ? static_cast<std::int64_t>(x) - static_cast<std::int64_t>(m) : static_cast<std::int64_t>(x);
  };
  auto root_of = [&](std::int64_t v) { return v <= 0 ? std::int64_t{0} : as_int(round_sqrt(static_cast<std::uint64_t>(v)) % m); };

  NamedTables t;
  t.ring = params;
  t.sqrt = lagrange_table(m, [&](std::uint64_t x) { return root_of(signed_of(x)); }, "sqrt");
  t.square_div_p = lagrange_table(
      m,
      [&](std::uint64_t x) {
        // round-half-up of x^2 / p in exact integer arithmetic
        const unsigned __int128 sq = static_cast<unsigned __int128>(x) * x;
        return as_int(static_cast<std::uint64_t>((2 * sq + p) / (2 * static_cast<unsigned __int128>(p)) % m));
      },
      "square_div_p");
  t.is_zero = lagrange_table(m, [](std::uint64_t x) { return x == 0 ? 1 : 0; }, "is_zero");
  t.sqrt_plus_p = lagrange_table(
      m, [&](std::uint64_t x) { return root_of(signed_of(x) + static_cast<std::int64_t>(p)); }, "sqrt_plus_p");
  t.sqrt_times_p = lagrange_table(
      m, [&](std::uint64_t x) { return root_of(signed_of(x) * static_cast<std::int64_t>(p)); }, "sqrt_times_p");
  t.is_neg = lagrange_table(m, [m](std::uint64_t x) { return 2 * x > m ? 1 : 0; }, "is_neg");
  return t;
}

std::shared_ptr<const NamedTables> named_tables(const RingParams& params) {
  using Key = std::tuple<std::uint64_t, std::uint64_t, std::uint32_t>;
  static std::mutex mutex;
  static std::map<Key, std::shared_ptr<const NamedTables>> cache;

  const Key key{params.modulus, params.coord_bound, params.dim};
  std::lock_guard lock(mutex);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto built = std::make_shared<const NamedTables>(build_named_tables(params));
  cache.emplace(key, built);
  return built;
}

he::Cipher is_smaller(const he::Backend& backend, const NamedTables& tables, const he::Cipher& x,
                      const he::Cipher& y) {
  return eval_poly_ps(backend, tables.is_neg, backend.sub(x, y));
}

he::Cipher is_smaller(const he::Backend& backend, const NamedTables& tables, const he::Cipher& x,
                      std::uint64_t y) {
  return eval_poly_ps(backend, tables.is_neg, backend.sub(x, y));
}

he::Cipher is_smaller(const he::Backend& backend, const NamedTables& tables, std::uint64_t x,
                      const he::Cipher& y) {
  return eval_poly_ps(backend, tables.is_neg, backend.sub(x, y));
}

namespace {

constexpr std::array<char, 4> kTableMagic = {'K', 'T', 'B', 'L'};

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> buf{};
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffU);
  out.write(buf.data(), buf.size());
}

std::uint64_t get_u64(std::istream& in, std::size_t& offset) {
  std::array<unsigned char, 8> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (in.gcount() != 8) throw DecodeError("truncated table file", offset + static_cast<std::size_t>(in.gcount()));
  offset += 8;
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8U) | buf[i];
  return v;
}

}  // namespace

void save_table(std::ostream& out, const PolyTable& table) {
  out.write(kTableMagic.data(), kTableMagic.size());
  put_u64(out, table.modulus);
  put_u64(out, fnv1a64(table.name));
  for (std::uint64_t c : table.coeffs) put_u64(out, c);
}

PolyTable load_table(std::istream& in, std::uint64_t expected_modulus, const std::string& name) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4 || magic != kTableMagic) throw DecodeError("bad table magic", 0);
  std::size_t offset = 4;
  const std::uint64_t modulus = get_u64(in, offset);
  if (modulus != expected_modulus) throw ParameterError("table modulus does not match ring");
  if (get_u64(in, offset) != fnv1a64(name)) throw ParameterError("table name hash does not match '" + name + "'");
  PolyTable table{modulus, std::vector<std::uint64_t>(modulus), name};
  for (auto& c : table.coeffs) {
    c = get_u64(in, offset);
    if (c >= modulus) throw DecodeError("coefficient not reduced", offset - 8);
  }
  return table;
}

}  // namespace kish
