#include "skyloc/matching.hpp"
#include "skyloc/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace skyloc;

namespace {

DescriptorMatrix random_unit_rows(std::uint64_t seed, int n, int d) {
  Rng rng(seed);
  DescriptorMatrix m(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) m(i, j) = static_cast<float>(rng.normal());
    m.row(i).normalize();
  }
  return m;
}

DescriptorMatrix rows2(std::initializer_list<std::pair<float, float>> pts) {
  DescriptorMatrix m(static_cast<Eigen::Index>(pts.size()), 2);
  Eigen::Index i = 0;
  for (auto [x, y] : pts) m.row(i++) << x, y;
  return m;
}

/// Brute-force mutual nearest neighbours without the ratio test.
std::vector<std::pair<int, int>> mutual_oracle(const DescriptorMatrix &a, const DescriptorMatrix &b, float cutoff) {
  auto nearest = [](const DescriptorMatrix &from, Eigen::Index i, const DescriptorMatrix &to) {
    int best = 0;
    double bd = 1e300;
    for (Eigen::Index j = 0; j < to.rows(); ++j) {
      const double d = (from.row(i) - to.row(j)).squaredNorm();
      if (d < bd) bd = d, best = static_cast<int>(j);
    }
    return best;
  };
  std::vector<std::pair<int, int>> out;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const int j = nearest(a, i, b);
    if (nearest(b, j, a) == i && (a.row(i) - b.row(j)).norm() <= cutoff) out.emplace_back(static_cast<int>(i), j);
  }
  return out;
}

}  // namespace

TEST(MatchLocal, IdenticalSets) {
  const DescriptorMatrix a = random_unit_rows(1, 40, 64);
  const auto m = match_local(a, a);
  ASSERT_EQ(m.size(), 40u);
  for (const auto &x : m) {
    EXPECT_EQ(x.index_a, x.index_b);
    EXPECT_EQ(x.distance, 0.0f);
  }
  for (std::size_t i = 1; i < m.size(); ++i) EXPECT_LT(m[i - 1].index_a, m[i].index_a);
}

TEST(MatchLocal, RatioTestRejectsAmbiguous) {
  // Query at origin; candidates at distances 0.50 and 0.55: ratio 0.909 > 0.8.
  const DescriptorMatrix a = rows2({{0.0f, 0.0f}});
  const DescriptorMatrix b = rows2({{0.5f, 0.0f}, {0.0f, 0.55f}});
  EXPECT_TRUE(match_local(a, b).empty());
  MatchOptions loose;
  loose.ratio = 1.0;
  const auto m = match_local(a, b, loose);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].index_b, 0);
  EXPECT_NEAR(m[0].distance, 0.5f, 1e-7f);
}

TEST(MatchLocal, Mutuality) {
  // b0's nearest in a is a0, but a0's nearest in b is b1.
  const DescriptorMatrix a = rows2({{0.0f, 0.0f}, {3.0f, 0.0f}, {0.0f, 5.0f}});
  const DescriptorMatrix b = rows2({{-0.3f, 0.0f}, {0.2f, 0.0f}, {0.0f, 4.6f}});
  MatchOptions loose;
  loose.ratio = 1.0;
  loose.max_distance = 10.0;
  const auto m = match_local(a, b, loose);
  for (const auto &x : m) EXPECT_NE(x.index_b, 0);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0], (Match{0, 1, m[0].distance}));
  EXPECT_EQ(m[1].index_a, 2);
  EXPECT_EQ(m[1].index_b, 2);
}

TEST(MatchLocal, DistanceCutoff) {
  const DescriptorMatrix a = rows2({{0.0f, 0.0f}});
  const DescriptorMatrix b = rows2({{0.95f, 0.0f}});
  EXPECT_TRUE(match_local(a, b).empty());
}

TEST(MatchLocal, SymmetricWithoutRatioAndAgreesWithOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const DescriptorMatrix a = random_unit_rows(100 + trial, 30 + trial, 16);
    DescriptorMatrix b = random_unit_rows(200 + trial, 25, 16);
    // Plant near-duplicates so some matches exist.
    for (int i = 0; i < 10; ++i) {
      b.row(i) = a.row(i * 2);
      for (int j = 0; j < 16; ++j) b(i, j) += static_cast<float>(0.05 * rng.normal());
      b.row(i).normalize();
    }
    MatchOptions opts;
    opts.ratio = 1.0;
    opts.max_distance = 2.0;
    const auto ab = match_local(a, b, opts);
    const auto ba = match_local(b, a, opts);
    ASSERT_EQ(ab.size(), ba.size());
    std::vector<std::pair<int, int>> p1, p2;
    for (const auto &m : ab) p1.emplace_back(m.index_a, m.index_b);
    for (const auto &m : ba) p2.emplace_back(m.index_b, m.index_a);
    std::sort(p1.begin(), p1.end());
    std::sort(p2.begin(), p2.end());
    EXPECT_EQ(p1, p2);
    EXPECT_EQ(p1, mutual_oracle(a, b, 2.0f));

    // With the default options every pair is still mutual and within bounds.
    const auto strict = match_local(a, b);
    const auto oracle = mutual_oracle(a, b, 0.9f);
    for (const auto &m : strict) {
      EXPECT_LE(m.distance, 0.9f);
      EXPECT_NE(std::find(oracle.begin(), oracle.end(), std::make_pair(m.index_a, m.index_b)), oracle.end());
    }
    for (std::size_t i = 1; i < strict.size(); ++i) EXPECT_LE(strict[i - 1].distance, strict[i].distance);
  }
}

TEST(MatchLocal, EmptyInputs) {
  EXPECT_TRUE(match_local(DescriptorMatrix(0, 64), random_unit_rows(1, 5, 64)).empty());
  EXPECT_TRUE(match_local(random_unit_rows(1, 5, 64), DescriptorMatrix(0, 64)).empty());
}
