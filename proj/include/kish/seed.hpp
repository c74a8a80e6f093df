// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

namespace kish {

/// SplitMix64 finalizer. Used to derive independent seeds from a base seed.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Named sub-stream of a base seed, optionally indexed (per point, per repetition).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::string_view stream,
                                    std::uint64_t index = 0) noexcept {
  return mix64(mix64(base ^ fnv1a64(stream)) + index);
}

}  // namespace kish
