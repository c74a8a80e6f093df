// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kish/he.hpp"

namespace kish::he::detail {

// Library-internal door into Cipher. Not installed with the public headers.
struct CipherAccess {
  static Cipher make(std::uint64_t value, std::uint16_t depth, std::uint64_t key_id) noexcept {
    return Cipher(value, depth, key_id);
  }
  static std::uint64_t value(const Cipher& c) noexcept { return c.value_; }
};

}  // namespace kish::he::detail
