#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "plfem/nfunc.hpp"
#include "plfem/properties.hpp"

using namespace plfem;

TEST(RatioBand, TracksExtremes) {
  RatioBand b;
  for (double r : {2.0, 0.5, 3.0, 1.0}) b.add(r);
  EXPECT_EQ(b.lo, 0.5);
  EXPECT_EQ(b.hi, 3.0);
  EXPECT_EQ(b.spread(), 6.0);
}

TEST(RandomPair, StaysInRangeAndReachesCloseDifferences) {
  std::mt19937_64 rng(11);
  int close = 0, far = 0;
  for (int k = 0; k < 20000; ++k) {
    const auto [P, Q] = random_pair(rng, -6.0, 3.0);
    for (double r : {norm(P), norm(Q)}) {
      EXPECT_GE(r, 1e-6 * (1 - 1e-12));
      EXPECT_LE(r, 1e3 * (1 + 1e-12));
    }
    const double rel = norm(P - Q) / norm(Q);
    close += rel < 1e-3;
    far += rel > 1e3;
  }
  EXPECT_GT(close, 1000);
  EXPECT_GT(far, 1000);
}

TEST(DistanceBands, QuadraticCaseIsExact) {
  // p = 2: F = A = id and phi_a(t) = t^2 / 2 for every shift
  const auto b = distance_bands(NFunction(2.0), 20000, 3);
  EXPECT_NEAR(b.F_over_A.lo, 1.0, 1e-9);
  EXPECT_NEAR(b.F_over_A.hi, 1.0, 1e-9);
  EXPECT_NEAR(b.F_over_shift.lo, 2.0, 1e-9);
  EXPECT_NEAR(b.F_over_shift.hi, 2.0, 1e-9);
  EXPECT_NEAR(b.A_over_shift.lo, 2.0, 1e-9);
  EXPECT_NEAR(b.A_over_shift.hi, 2.0, 1e-9);
}

TEST(DistanceBands, ProductOfRatiosIsConsistent) {
  for (double p : {1.1, 1.5, 3.0, 10.0}) {
    const auto b = distance_bands(NFunction(p), 50000, 4);
    // F/s = (F/A)(A/s) sample by sample
    EXPECT_GE(b.F_over_shift.lo, b.F_over_A.lo * b.A_over_shift.lo * (1 - 1e-12)) << p;
    EXPECT_LE(b.F_over_shift.hi, b.F_over_A.hi * b.A_over_shift.hi * (1 + 1e-12)) << p;
    EXPECT_GT(b.F_over_A.spread(), 1.0) << p;
  }
}

TEST(DistanceBands, FlatterForExponentsNearTwo) {
  const double s15 = distance_bands(NFunction(1.5), 50000, 5).F_over_A.spread();
  const double s3 = distance_bands(NFunction(3.0), 50000, 5).F_over_A.spread();
  const double s11 = distance_bands(NFunction(1.1), 50000, 5).F_over_A.spread();
  const double s10 = distance_bands(NFunction(10.0), 50000, 5).F_over_A.spread();
  EXPECT_LT(s15, s11);
  EXPECT_LT(s3, s10);
}

TEST(Poincare, QuadraticCaseMatchesClosedFormSecondMoment) {
  // Replays the sampler's draws; for p = 2 the integral of (g.(x - c))^2 over
  // T is |T| / 12 * sum_i (g.(x_i - c))^2.
  const unsigned long seed = 9;
  const std::size_t samples = 5000;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    std::array<Vec2, 3> x{Vec2{u(rng), u(rng)}, Vec2{u(rng), u(rng)}, Vec2{u(rng), u(rng)}};
    const double area = 0.5 * std::abs(cross(x[1] - x[0], x[2] - x[0]));
    if (area < 1e-3) continue;
    const double h = std::max({norm(x[1] - x[0]), norm(x[2] - x[1]), norm(x[0] - x[2])});
    const Vec2 g = random_vector(rng, -3.0, 2.0);
    const Vec2 c = (1.0 / 3.0) * (x[0] + x[1] + x[2]);
    double m2 = 0.0;
    for (const auto& xi : x) m2 += std::pow(dot(g, xi - c), 2);
    const double integral = 0.5 * area * m2 / 12.0;
    worst = std::max(worst, integral / (area * 0.5 * std::pow(h * norm(g), 2)));
  }
  EXPECT_NEAR(poincare_constant(NFunction(2.0), samples, seed), worst, 1e-12 * worst);
  // sum_i |x_i - c|^2 <= h^2
  EXPECT_LE(worst, 1.0 / 12.0);
}

TEST(Poincare, DecreasesWithTheExponent) {
  // |v - Pi_0 v| / (h |g|) < 1 so larger p suppresses the ratio
  const double c11 = poincare_constant(NFunction(1.1), 5000, 2);
  const double c2 = poincare_constant(NFunction(2.0), 5000, 2);
  const double c10 = poincare_constant(NFunction(10.0), 5000, 2);
  EXPECT_GT(c11, c2);
  EXPECT_GT(c2, c10);
  EXPECT_GT(c10, 0.0);
}
