// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "kish/errors.hpp"
#include "kish/metering.hpp"
#include "kish/primitives.hpp"

namespace kish {
namespace {

struct Fixture {
  explicit Fixture(std::uint64_t grid, std::uint64_t n = 10, std::uint64_t seed = 1)
      : ring(select_ring_params(grid, 2, n)), tables(named_tables(ring)), kp(he::keygen(ring, seed)), be(kp.pk) {}

  std::uint64_t dec(const he::Cipher& c) const { return he::decrypt(kp.sk, c); }

  std::vector<he::Cipher> enc(const std::vector<std::uint64_t>& xs) const {
    std::vector<he::Cipher> out;
    for (auto x : xs) out.push_back(be.encrypt(x));
    return out;
  }

  RingParams ring;
  std::shared_ptr<const NamedTables> tables;
  he::KeyPair kp;
  he::MockBackend be;
};

std::vector<std::uint64_t> gaussian_values(std::mt19937_64& rng, std::size_t n, double mean, double sd,
                                           std::uint64_t hi) {
  std::normal_distribution<double> nd(mean, sd);
  std::vector<std::uint64_t> xs(n);
  for (auto& x : xs) x = static_cast<std::uint64_t>(std::clamp(std::round(nd(rng)), 0.0, double(hi)));
  return xs;
}

TEST(ComputeDistL1, Examples) {
  Fixture fx(10);
  const std::vector<std::uint64_t> s{3, 1};
  EXPECT_EQ(fx.dec(compute_dist_l1(fx.be, *fx.tables, fx.enc({1, 4}), s)), 5U);
  EXPECT_EQ(fx.dec(compute_dist_l1(fx.be, *fx.tables, fx.enc({3, 1}), s)), 0U);
  const std::vector<std::uint64_t> short_s{3};
  EXPECT_THROW(compute_dist_l1(fx.be, *fx.tables, fx.enc({1, 4}), short_s), ParameterError);
  const std::vector<std::uint64_t> off_grid{3, 10};
  EXPECT_THROW(compute_dist_l1(fx.be, *fx.tables, fx.enc({1, 4}), off_grid), RangeError);
}

TEST(ComputeDistL1, MatchesManhattanOracleAndDepth) {
  Fixture fx(50);
  std::mt19937_64 rng(50);
  const auto cmp_depth = metered_scope([&] { return is_smaller(fx.be, *fx.tables, fx.be.encrypt(1), 2); }).metrics.max_depth;
  for (int i = 0; i < 200; ++i) {
    const std::vector<std::uint64_t> q{rng() % 50, rng() % 50};
    const std::vector<std::uint64_t> s{rng() % 50, rng() % 50};
    const auto oracle = static_cast<std::uint64_t>(std::llabs(std::int64_t(q[0]) - std::int64_t(s[0])) +
                                                   std::llabs(std::int64_t(q[1]) - std::int64_t(s[1])));
    const auto run = metered_scope([&] { return compute_dist_l1(fx.be, *fx.tables, fx.enc(q), s); });
    EXPECT_EQ(fx.dec(run.result), oracle);
    EXPECT_EQ(run.metrics.max_depth, cmp_depth + 1);
    EXPECT_EQ(run.result.depth(), cmp_depth + 1);
  }
}

TEST(CoinInverse, SmallestPreimage) {
  for (std::uint64_t r = 1; r < 5000; ++r) {
    for (CoinFunction f : {CoinFunction::identity, CoinFunction::square}) {
      std::uint64_t y = 0;
      while (apply(f, y) < r) ++y;
      EXPECT_EQ(ceil_inverse(f, r), y) << r;
    }
  }
}

TEST(UniformInt, StaysInRangeAndIsFlat) {
  std::mt19937_64 rng(4);
  std::vector<int> hist(7, 0);
  const int draws = 70000;
  for (int i = 0; i < draws; ++i) {
    const std::uint64_t v = uniform_int(rng, 3, 9);
    ASSERT_GE(v, 3U);
    ASSERT_LE(v, 9U);
    ++hist[v - 3];
  }
  // chi-square with 6 degrees of freedom; 22.46 is the 0.999 quantile.
  double chi2 = 0;
  for (int h : hist) chi2 += (h - draws / 7.0) * (h - draws / 7.0) / (draws / 7.0);
  EXPECT_LT(chi2, 22.46);
  EXPECT_EQ(uniform_int(rng, 5, 5), 5U);
}

TEST(CoinToss, DeterministicEndpoints) {
  Fixture fx(50);
  std::mt19937_64 rng(1);
  const CoinSpec spec{CoinFunction::identity, 40, 0};
  for (int i = 0; i < 300; ++i) {
    EXPECT_EQ(fx.dec(coin_toss(fx.be, *fx.tables, fx.be.encrypt(0), spec, rng)), 0U);
    EXPECT_EQ(fx.dec(coin_toss(fx.be, *fx.tables, fx.be.encrypt(40), spec, rng)), 1U);
    EXPECT_EQ(fx.dec(coin_toss(fx.be, *fx.tables, fx.be.encrypt(90), spec, rng)), 1U);  // saturated
  }
}

TEST(CoinToss, IdentityFrequency) {
  Fixture fx(50);
  const CoinSpec spec{CoinFunction::identity, 96, 0};
  std::mt19937_64 rng(96);
  const he::Cipher x = fx.be.encrypt(30);
  std::uint64_t ones = 0;
  for (int i = 0; i < 100000; ++i) ones += fx.dec(coin_toss(fx.be, *fx.tables, x, spec, rng));
  EXPECT_NEAR(ones / 100000.0, 30.0 / 96.0, 0.01);
}

TEST(CoinToss, SquareFrequency) {
  Fixture fx(50);
  const CoinSpec spec{CoinFunction::square, 1000, 0};
  std::mt19937_64 rng(7);
  const he::Cipher x = fx.be.encrypt(17);  // 289 / 1000
  std::uint64_t ones = 0;
  const int tosses = 40000;
  for (int i = 0; i < tosses; ++i) ones += fx.dec(coin_toss(fx.be, *fx.tables, x, spec, rng));
  const double se = std::sqrt(0.289 * 0.711 / tosses);
  EXPECT_NEAR(ones / double(tosses), 0.289, 4 * se);
}

TEST(CoinToss, SeededOverloadIsReproducible) {
  Fixture fx(50);
  const he::Cipher x = fx.be.encrypt(20);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const CoinSpec spec{CoinFunction::identity, 40, seed};
    EXPECT_EQ(fx.dec(coin_toss(fx.be, *fx.tables, x, spec)), fx.dec(coin_toss(fx.be, *fx.tables, x, spec)));
  }
}

TEST(ProbAvg, DeterministicEndpoints) {
  Fixture fx(50);
  const CoinSpec spec{CoinFunction::identity, 30, 5};
  EXPECT_EQ(fx.dec(prob_avg(fx.be, *fx.tables, fx.enc(std::vector<std::uint64_t>(20, 0)), spec)), 0U);
  EXPECT_EQ(fx.dec(prob_avg(fx.be, *fx.tables, fx.enc(std::vector<std::uint64_t>(20, 30)), spec)), 20U);
  EXPECT_THROW(prob_avg(fx.be, *fx.tables, std::span<const he::Cipher>{}, spec), ParameterError);
}

TEST(ProbAvg, GaussianMeanEstimate) {
  Fixture fx(100, 569);
  std::mt19937_64 rng(569);
  const auto xs = gaussian_values(rng, 569, 50, 10, 198);
  const double chi = std::accumulate(xs.begin(), xs.end(), 0.0) / 569.0;
  const auto enc = fx.enc(xs);
  double total = 0;
  for (std::uint64_t run = 0; run < 200; ++run) {
    total += double(fx.dec(prob_avg(fx.be, *fx.tables, enc, CoinSpec{CoinFunction::identity, 569, run})));
  }
  EXPECT_LE(std::abs(total / 200 - chi), 0.05 * chi);
}

TEST(ProbAvg, UnbiasedWithinStandardError) {
  Fixture fx(100, 50);
  std::mt19937_64 rng(12);
  std::vector<std::uint64_t> xs(50);
  for (auto& x : xs) x = rng() % 120;
  const std::uint64_t m = 150;
  const double chi = std::accumulate(xs.begin(), xs.end(), 0.0) / double(m);
  const auto enc = fx.enc(xs);
  const int runs = 500;
  double total = 0;
  for (int run = 0; run < runs; ++run) {
    total += double(fx.dec(prob_avg(fx.be, *fx.tables, enc, CoinSpec{CoinFunction::identity, m, 1000U + run})));
  }
  const double se_bound = std::sqrt(50.0) / 2 / std::sqrt(double(runs));
  EXPECT_LE(std::abs(total / runs - chi), 3 * se_bound);
}

TEST(ProbAvg, OutputWithinZeroToN) {
  Fixture fx(100, 40);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint64_t> xs(40);
    for (auto& x : xs) x = rng() % 199;
    const CoinSpec spec{trial % 2 ? CoinFunction::square : CoinFunction::identity, 1 + rng() % 500, rng()};
    EXPECT_LE(fx.dec(prob_avg(fx.be, *fx.tables, fx.enc(xs), spec)), 40U);
  }
}

TEST(ProbAvg, DepthIndependentOfN) {
  Fixture fx(100, 569);
  std::vector<std::uint32_t> depths;
  for (std::size_t n : {10, 100, 569}) {
    const auto enc = fx.enc(std::vector<std::uint64_t>(n, 17));
    depths.push_back(
        metered_scope([&] { return prob_avg(fx.be, *fx.tables, enc, CoinSpec{CoinFunction::square, n, 3}); })
            .metrics.max_depth);
  }
  EXPECT_EQ(depths[0], depths[1]);
  EXPECT_EQ(depths[1], depths[2]);
}

TEST(ProbAvg, GatesLinearInN) {
  Fixture fx(100, 200);
  for (std::size_t k : {5, 37, 100}) {
    const auto half = fx.enc(std::vector<std::uint64_t>(k, 9));
    const auto full = fx.enc(std::vector<std::uint64_t>(2 * k, 9));
    const CoinSpec spec{CoinFunction::identity, 2 * k, 4};
    const auto g1 = metered_scope([&] { return prob_avg(fx.be, *fx.tables, half, spec); }).metrics.mult_gates;
    const auto g2 = metered_scope([&] { return prob_avg(fx.be, *fx.tables, full, spec); }).metrics.mult_gates;
    EXPECT_EQ(g2, 2 * g1);
  }
}

TEST(ProbAvg, SeedFixesCircuitUnderAnyThreadCount) {
  Fixture fx(100, 300);
  std::mt19937_64 rng(31);
  std::vector<std::uint64_t> xs(300);
  for (auto& x : xs) x = rng() % 199;
  const auto enc = fx.enc(xs);
  const CoinSpec spec{CoinFunction::identity, 300, 77};
  set_thread_limit(1);
  const auto a = metered_scope([&] { return prob_avg(fx.be, *fx.tables, enc, spec); });
  set_thread_limit(4);
  const auto b = metered_scope([&] { return prob_avg(fx.be, *fx.tables, enc, spec); });
  set_thread_limit(0);
  EXPECT_EQ(fx.dec(a.result), fx.dec(b.result));
  EXPECT_EQ(a.metrics.mult_gates, b.metrics.mult_gates);
  EXPECT_EQ(a.metrics.add_gates, b.metrics.add_gates);
  EXPECT_EQ(a.metrics.max_depth, b.metrics.max_depth);
}

}  // namespace
}  // namespace kish
