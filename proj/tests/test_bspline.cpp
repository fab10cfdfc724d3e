#include "morphield/bspline.hpp"
#include "morphield/spline_field.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace morphield;

TEST(Bspline, KnotValues) {
  EXPECT_NEAR(bspline_b(0.0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(bspline_b(1.0), 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(bspline_b(-1.0), 1.0 / 6.0, 1e-15);
  EXPECT_EQ(bspline_b(2.0), 0.0);
  EXPECT_EQ(bspline_b(-2.0), 0.0);
  EXPECT_NEAR(bspline_b(0.5), 23.0 / 48.0, 1e-15);
  EXPECT_NEAR(bspline_tensor(0.0, 0.0, 0.0), 8.0 / 27.0, 1e-15);
  EXPECT_DOUBLE_EQ(kBasisPeak, 8.0 / 27.0);
}

TEST(Bspline, MatchesPiecewiseDefinitionAtRandomArguments) {
  // Independent form: the cubic B-spline as a sum of truncated powers.
  auto truncated = [](double t) {
    auto p3 = [](double x) { return x > 0.0 ? x * x * x : 0.0; };
    return (p3(t + 2) - 4 * p3(t + 1) + 6 * p3(t) - 4 * p3(t - 1) + p3(t - 2)) / 6.0;
  };
  std::mt19937_64 rng(test::kSeed);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 10000; ++i) {
    const double t = u(rng);
    EXPECT_NEAR(bspline_b(t), truncated(t), 1e-12) << t;
  }
}

TEST(Bspline, SymmetricNonNegativeCompactSupport) {
  std::mt19937_64 rng(test::kSeed + 1);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  for (int i = 0; i < 10000; ++i) {
    const double t = u(rng);
    EXPECT_EQ(bspline_b(t), bspline_b(-t));
    EXPECT_EQ(bspline_b_d1(t), -bspline_b_d1(-t));
    EXPECT_GE(bspline_b(t), 0.0);
    if (std::abs(t) >= 2.0) {
      EXPECT_EQ(bspline_b(t), 0.0);
      EXPECT_EQ(bspline_b_d1(t), 0.0);
      EXPECT_EQ(bspline_b_d2(t), 0.0);
    }
  }
}

TEST(Bspline, DerivativesMatchCentralDifferences) {
  std::mt19937_64 rng(test::kSeed + 2);
  std::uniform_real_distribution<double> u(-2.2, 2.2);
  const double h = 1e-5;
  for (int i = 0; i < 5000; ++i) {
    const double t = u(rng);
    EXPECT_NEAR(bspline_b_d1(t), (bspline_b(t + h) - bspline_b(t - h)) / (2 * h), 1e-8) << t;
    // b'' is only C0 at the knots; stay away from them.
    if (std::abs(t - std::round(t)) > 1e-3)
      EXPECT_NEAR(bspline_b_d2(t), (bspline_b_d1(t + h) - bspline_b_d1(t - h)) / (2 * h), 1e-8) << t;
  }
}

TEST(Bspline, CellWeightsAreShiftedBasisValues) {
  std::mt19937_64 rng(test::kSeed + 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double f = u(rng);
    const auto cw = cell_weights_full(f);
    double sum = 0.0;
    for (int m = 0; m < 4; ++m) {
      EXPECT_NEAR(cw.w[m], bspline_b(f + 1 - m), 1e-15);
      EXPECT_NEAR(cw.d1[m], bspline_b_d1(f + 1 - m), 1e-14);
      EXPECT_NEAR(cw.d2[m], bspline_b_d2(f + 1 - m), 1e-14);
      sum += cw.w[m];
    }
    EXPECT_NEAR(sum, 1.0, 1e-15);
  }
}

TEST(Bspline, TrivariatePartitionOfUnity) {
  const GridSpec spec(16);
  const double w = spec.spacing();
  // Sum of every basis touching q, by direct evaluation.
  for (const Vec3& q : test::random_points(10000, test::kSeed + 4, 2 * w, 1 - 2 * w)) {
    const int ci = static_cast<int>(std::floor(q.x() / w)), cj = static_cast<int>(std::floor(q.y() / w)),
              ck = static_cast<int>(std::floor(q.z() / w));
    double sum = 0.0;
    for (int k = ck - 1; k <= ck + 2; ++k)
      for (int j = cj - 1; j <= cj + 2; ++j)
        for (int i = ci - 1; i <= ci + 2; ++i) sum += basis_value(spec, {i, j, k}, q);
    ASSERT_NEAR(sum, 1.0, 1e-12);
  }
  // Same through the field: all coefficients one.
  const SplineField ones(spec, std::vector<double>(spec.vertex_count(), 1.0));
  for (const Vec3& q : test::random_points(10000, test::kSeed + 5, 2 * w, 1 - 2 * w)) {
    const auto s = ones.sample(q);
    ASSERT_NEAR(s.value, 1.0, 1e-12);
    ASSERT_LT(s.gradient.norm(), 1e-10);
  }
}

TEST(Bspline, TruncatedSumNearTheFaces) {
  // Missing bases outside the lattice: at a corner vertex only 2x2x2 bases
  // remain, summing (2/3 + 1/6)^3.
  const GridSpec spec(16);
  const SplineField ones(spec, std::vector<double>(spec.vertex_count(), 1.0));
  EXPECT_NEAR(ones.value(Vec3::Zero()), std::pow(5.0 / 6.0, 3), 1e-14);
  EXPECT_TRUE(ones.sample(Vec3(-0.1, 0.5, 0.5)).extrapolated);
  EXPECT_FALSE(ones.sample(Vec3(0.5, 0.5, 0.5)).extrapolated);
}
