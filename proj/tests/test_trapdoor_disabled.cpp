// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "kish/classifier.hpp"
#include "kish/errors.hpp"

namespace kish {
namespace {

TEST(TrapdoorDisabled, RefusesOutsideTestBuilds) {
  EXPECT_FALSE(trapdoor::enabled());
  const RingParams ring = select_ring_params(10, 2, 2);
  const he::KeyPair kp = he::keygen(ring, 1);
  const he::Cipher c = he::encrypt(kp.pk, 3);
  EXPECT_THROW(trapdoor::peek(c), Error);
  LabeledDatabase db{{{1, 1}, {2, 2}}, {0, 1}};
  const std::vector<std::uint64_t> q{0, 0};
  EXPECT_THROW(trapdoor::kappa_of_run(db, q, make_protocol_params(ring, 1, 1, 0), 0), Error);
  EXPECT_THROW(trapdoor::count_saturated(std::span<const he::Cipher>(&c, 1), CoinSpec{}), Error);
}

}  // namespace
}  // namespace kish
