#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "compshape/gridmath.hpp"

namespace compshape::gridmath {
namespace {

void expectSameGamma(const DtResult1D& fast, const DtResult1D& slow, const DtProblem1D& p) {
  ASSERT_EQ(fast.gamma.size(), slow.gamma.size());
  for (std::size_t i = 0; i < slow.gamma.size(); ++i) {
    const double a = fast.gamma[i];
    const double b = slow.gamma[i];
    if (std::isinf(b)) {
      EXPECT_TRUE(std::isinf(a)) << "x=" << i + 1;
      EXPECT_EQ(fast.argmin[i], kNoArgmin);
      continue;
    }
    EXPECT_LE(std::abs(a - b), 1e-9 * std::max(1.0, std::abs(b))) << "x=" << i + 1;
    // The returned argmin is admissible and attains the value.
    const int z = fast.argmin[i];
    const auto x = static_cast<std::int64_t>(i + 1);
    ASSERT_NE(z, kNoArgmin);
    EXPECT_GE(z, std::max<std::int64_t>(1, p.lower(x)));
    EXPECT_LE(z, std::min<std::int64_t>(p.size(), p.upper(x)));
    const double h = p.roots.empty() ? z + p.shift : p.roots[static_cast<std::size_t>(z - 1)];
    const double d = static_cast<double>(x) - h;
    EXPECT_NEAR(p.weight * d * d + p.g[static_cast<std::size_t>(z - 1)], a,
                1e-9 * std::max(1.0, std::abs(a)));
  }
}

DtProblem1D randomProblem(std::mt19937_64& rng, int maxN) {
  std::uniform_int_distribution<int> sizeDist(1, maxN);
  std::uniform_real_distribution<double> cost(0.0, 10.0);
  std::uniform_int_distribution<int> halfShift(-4, 4);
  std::uniform_int_distribution<int> coin(0, 9);
  DtProblem1D p;
  const int n = sizeDist(rng);
  p.g.resize(static_cast<std::size_t>(n));
  for (double& v : p.g) v = coin(rng) == 0 ? kInf : cost(rng);
  p.shift = halfShift(rng) / 2.0;
  p.lower = {2, -n};
  p.upper = {2, -1};
  return p;
}

TEST(Cgdt1d, SinglePoint) {
  DtProblem1D p;
  p.g = {5.0};
  p.lower = {0, 1};
  p.upper = {0, 1};
  const auto r = cgdt1d(p);
  EXPECT_EQ(r.gamma, std::vector<double>{5.0});
  EXPECT_EQ(r.argmin, std::vector<int>{1});
  const auto b = cgdtBruteForce1d(p);
  EXPECT_EQ(b.gamma, r.gamma);
  EXPECT_EQ(b.argmin, r.argmin);
}

TEST(Cgdt1d, UnconstrainedZeroCostsRootAtEachPosition) {
  DtProblem1D p;
  p.g.assign(8, 0.0);
  p.lower = {0, 1};
  p.upper = {0, 8};
  const auto r = cgdt1d(p);
  const auto b = cgdtBruteForce1d(p);
  for (int x = 1; x <= 8; ++x) {
    EXPECT_EQ(r.gamma[x - 1], 0.0);
    EXPECT_EQ(r.argmin[x - 1], x);
    EXPECT_EQ(b.gamma[x - 1], 0.0);
    EXPECT_EQ(b.argmin[x - 1], x);
  }
}

TEST(Cgdt1d, TwoTermHalfShift) {
  DtProblem1D p;
  p.g = {0.0, 0.0};
  p.shift = 0.5;
  p.lower = {0, 1};
  p.upper = {0, 2};
  const auto b = cgdtBruteForce1d(p);
  // x=1: min((1-1.5)^2, (1-2.5)^2) = 0.25; x=2: min(0.25, 0.25) = 0.25 at z=1.
  EXPECT_DOUBLE_EQ(b.gamma[0], 0.25);
  EXPECT_EQ(b.argmin[0], 1);
  EXPECT_DOUBLE_EQ(b.gamma[1], 0.25);
  EXPECT_EQ(b.argmin[1], 1);
  expectSameGamma(cgdt1d(p), b, p);
}

TEST(Cgdt1d, MatchesBruteForceOnPairwiseConstraints) {
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> cost(0.0, 10.0);
  std::uniform_int_distribution<int> halfShift(-2, 2);
  std::uniform_int_distribution<int> sizeDist(1, 64);
  for (int trial = 0; trial < 1000; ++trial) {
    DtProblem1D p;
    const int n = sizeDist(rng);
    p.g.resize(static_cast<std::size_t>(n));
    for (double& v : p.g) v = cost(rng);
    p.shift = halfShift(rng) / 2.0;
    p.lower = {2, -n};
    p.upper = {2, -1};
    expectSameGamma(cgdt1d(p), cgdtBruteForce1d(p), p);
  }
}

TEST(Cgdt1d, RandomizedWithInfinitiesWeightsAndWindows) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> slope(0, 3);
  std::uniform_int_distribution<int> offset(-20, 20);
  std::uniform_real_distribution<double> weight(0.0, 3.0);
  for (int trial = 0; trial < 2000; ++trial) {
    DtProblem1D p = randomProblem(rng, 256);
    if (trial % 2 == 0) {
      p.lower = {slope(rng), offset(rng)};
      p.upper = {p.lower.slope, p.lower.offset + std::abs(offset(rng))};
    }
    if (trial % 3 == 0) p.weight = trial % 9 == 0 ? 0.0 : weight(rng);
    DtTrace trace;
    const auto fast = cgdt1d(p, &trace);
    expectSameGamma(fast, cgdtBruteForce1d(p), p);
    EXPECT_LE(trace.envelopeOps(), 2 * p.size());
  }
}

TEST(Cgdt1d, RepeatedRootsMatchOracle) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> step(0, 2);
  for (int trial = 0; trial < 500; ++trial) {
    DtProblem1D p = randomProblem(rng, 48);
    double h = -3.0;
    for (int z = 0; z < p.size(); ++z) {
      h += step(rng) * 0.5;
      p.roots.push_back(h);
    }
    DtTrace trace;
    expectSameGamma(cgdt1d(p, &trace), cgdtBruteForce1d(p), p);
  }
}

TEST(Cgdt1d, TiesResolveToSmallestZLikeTheOracle) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> small(0, 3);
  std::uniform_int_distribution<int> halfShift(-4, 4);
  std::uniform_int_distribution<int> sizeDist(1, 40);
  for (int trial = 0; trial < 3000; ++trial) {
    DtProblem1D p;
    const int n = sizeDist(rng);
    for (int z = 0; z < n; ++z) p.g.push_back(small(rng) == 3 ? kInf : small(rng));
    p.shift = halfShift(rng) / 2.0;
    p.weight = trial % 4 == 0 ? 0.0 : 0.25 * (1 + trial % 3);
    if (trial % 2 == 0) {
      p.lower = {2, -n};
      p.upper = {2, -1};
    }
    const auto fast = cgdt1d(p);
    const auto slow = cgdtBruteForce1d(p);
    ASSERT_EQ(fast.gamma, slow.gamma) << "trial " << trial;
    ASSERT_EQ(fast.argmin, slow.argmin) << "trial " << trial;
  }
}

TEST(Cgdt1d, AllInfiniteIsFlaggedNotFailed) {
  DtProblem1D p;
  p.g.assign(5, kInf);
  const auto r = cgdt1d(p);
  for (int x = 1; x <= 5; ++x) {
    EXPECT_FALSE(r.feasible(x));
    EXPECT_TRUE(std::isinf(r.gamma[x - 1]));
  }
}

TEST(Cgdt1d, EmptyRangeFlagsOnlyThatPosition) {
  DtProblem1D p;
  p.g = {1.0, 2.0, 3.0, 4.0};
  // z in [2x-3, 2x-3]: x=1 -> z=-1 (empty), x=2 -> 1, x=3 -> 3, x=4 -> 5 (empty).
  p.lower = {2, -3};
  p.upper = {2, -3};
  const auto r = cgdt1d(p);
  EXPECT_FALSE(r.feasible(1));
  EXPECT_TRUE(r.feasible(2));
  EXPECT_TRUE(r.feasible(3));
  EXPECT_FALSE(r.feasible(4));
  expectSameGamma(r, cgdtBruteForce1d(p), p);
}

TEST(Cgdt1d, RejectsInvalidInput) {
  DtProblem1D p;
  EXPECT_THROW(cgdt1d(p), InvalidArgument);
  p.g = {1.0, std::nan("")};
  EXPECT_THROW(cgdt1d(p), InvalidArgument);
  p.g = {1.0, 2.0};
  p.weight = -1.0;
  EXPECT_THROW(cgdt1d(p), InvalidArgument);
  p.weight = 1.0;
  p.lower = {-1, 0};
  EXPECT_THROW(cgdt1d(p), InvalidArgument);
  p.lower = {0, 1};
  p.roots = {2.0, 1.0};
  EXPECT_THROW(cgdt1d(p), InvalidArgument);
}

// Hand-built instances for each way a new parabola meets the envelope.
TEST(Cgdt1dCases, IntersectionInsideRange) {
  DtProblem1D p;
  p.g = {0.0, 0.0};
  DtTrace t;
  expectSameGamma(cgdt1d(p, &t), cgdtBruteForce1d(p), p);
  EXPECT_EQ(t.continuousBreaks, 1);
}

TEST(Cgdt1dCases, EvictionWalksBackThroughEnvelope) {
  DtProblem1D p;
  p.g = {5.0, 5.0, 0.0};
  DtTrace t;
  const auto r = cgdt1d(p, &t);
  expectSameGamma(r, cgdtBruteForce1d(p), p);
  EXPECT_EQ(t.pops, 2);
  EXPECT_EQ(r.argmin, (std::vector<int>{3, 3, 3}));
}

TEST(Cgdt1dCases, PreviousParabolaExpiresBeforeIntersection) {
  DtProblem1D p;
  p.g = {0.0, 100.0, 100.0, 100.0};
  p.lower = {1, -1};  // z >= x - 1
  p.upper = {1, 1};   // z <= x + 1
  DtTrace t;
  const auto r = cgdt1d(p, &t);
  expectSameGamma(r, cgdtBruteForce1d(p), p);
  EXPECT_GE(t.expiryBreaks, 1);
  // Left parabola owns x=2 (its last valid x); at x=3 it has expired.
  EXPECT_EQ(r.argmin[1], 1);
  EXPECT_EQ(r.argmin[2], 3);
}

TEST(Cgdt1dCases, TakeoverClippedToValidityStart) {
  DtProblem1D p;
  p.g = {10.0, 0.0};
  p.upper = {1, 0};  // z <= x
  DtTrace t;
  const auto r = cgdt1d(p, &t);
  expectSameGamma(r, cgdtBruteForce1d(p), p);
  EXPECT_EQ(t.clippedBreaks, 1);
  EXPECT_EQ(r.gamma, (std::vector<double>{10.0, 0.0}));
}

TEST(Cgdt1dCases, UncoveredGapBetweenParabolas) {
  DtProblem1D p;
  p.g = {0.0, kInf, kInf, 0.0};
  p.lower = {1, 0};
  p.upper = {1, 0};
  DtTrace t;
  const auto r = cgdt1d(p, &t);
  expectSameGamma(r, cgdtBruteForce1d(p), p);
  EXPECT_EQ(t.gaps, 1);
  EXPECT_FALSE(r.feasible(2));
  EXPECT_FALSE(r.feasible(3));
}

TEST(Cgdt1dCases, EqualRootsKeepCheaperParabola) {
  DtProblem1D p;
  p.g = {3.0, 1.0, 0.0};
  p.roots = {1.0, 1.0, 2.0};
  DtTrace t;
  expectSameGamma(cgdt1d(p, &t), cgdtBruteForce1d(p), p);
  EXPECT_GE(t.equalRoots, 1);

  p.g = {1.0, 3.0, 0.0};
  p.lower = {1, -1};
  p.upper = {1, 1};
  DtTrace t2;
  expectSameGamma(cgdt1d(p, &t2), cgdtBruteForce1d(p), p);
  EXPECT_GE(t2.equalRoots, 1);
}

TEST(Cgdt1dCases, ZeroWeightIsASlidingMinimum) {
  DtProblem1D p;
  p.g = {4.0, 1.0, 3.0, 2.0, 5.0, 0.5};
  p.weight = 0.0;
  p.lower = {1, -1};
  p.upper = {1, 1};
  const auto r = cgdt1d(p);
  expectSameGamma(r, cgdtBruteForce1d(p), p);
  EXPECT_EQ(r.gamma, (std::vector<double>{1.0, 1.0, 1.0, 2.0, 0.5, 0.5}));
}

// Exhaustive 2-D reference for the pairwise sub-problem.
struct BrutePair {
  Grid<double> energy;
};

BrutePair brutePairwise(const Grid<double>& e1, double wx, double wy, double dx, double dy) {
  const int w = e1.width();
  const int h = e1.height();
  BrutePair out{Grid<double>(w, h, kInf)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int y1 = 0; y1 < h; ++y1) {
        for (int x1 = 0; x1 < w; ++x1) {
          const int x2 = 2 * x - x1;
          const int y2 = 2 * y - y1;
          if (!e1.contains(x2, y2) || !(e1(x1, y1) < kInf)) continue;
          const double ddx = x2 - x1 - dx;
          const double ddy = y2 - y1 - dy;
          const double v = wx * ddx * ddx + wy * ddy * ddy + e1(x1, y1);
          out.energy(x, y) = std::min(out.energy(x, y), v);
        }
      }
    }
  }
  return out;
}

TEST(PairwiseMin2d, ZeroFieldMapsEachPositionToItself) {
  Grid<double> e1(5, 4, 0.0);
  const auto r = pairwiseMin2d(e1, 1.3, 0.7, 0.0, 0.0);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 5; ++x) {
      EXPECT_EQ(r.energy(x, y), 0.0);
      EXPECT_EQ(r.argFirst(x, y), static_cast<std::int32_t>(e1.index(x, y)));
    }
  }
}

TEST(PairwiseMin2d, MatchesExhaustiveScan) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> cost(-5.0, 5.0);
  Grid<double> e1(6, 6);
  for (double& v : e1.values()) v = cost(rng);
  const auto r = pairwiseMin2d(e1, 1.0, 1.0, 2.0, 0.0);
  const auto b = brutePairwise(e1, 1.0, 1.0, 2.0, 0.0);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) {
      EXPECT_NEAR(r.energy(x, y), b.energy(x, y), 1e-9);
      const Point s1 = e1.position(static_cast<std::size_t>(r.argFirst(x, y)));
      const double ddx = (2 * x - s1.x) - s1.x - 2.0;
      const double ddy = (2 * y - s1.y) - s1.y;
      EXPECT_NEAR(ddx * ddx + ddy * ddy + e1[s1], r.energy(x, y), 1e-9);
    }
  }
}

TEST(PairwiseMin2d, RandomizedAgainstExhaustiveScan) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> cost(-5.0, 5.0);
  std::uniform_real_distribution<double> weight(0.0, 2.0);
  std::uniform_int_distribution<int> offset(-8, 8);
  std::uniform_int_distribution<int> side(1, 9);
  std::uniform_int_distribution<int> coin(0, 7);
  for (int trial = 0; trial < 150; ++trial) {
    Grid<double> e1(side(rng), side(rng));
    for (double& v : e1.values()) v = coin(rng) == 0 ? kInf : cost(rng);
    const double wx = weight(rng);
    const double wy = weight(rng);
    const double dx = offset(rng) / 2.0;
    const double dy = offset(rng) / 2.0;
    const auto r = pairwiseMin2d(e1, wx, wy, dx, dy);
    const auto b = brutePairwise(e1, wx, wy, dx, dy);
    for (std::size_t i = 0; i < e1.size(); ++i) {
      if (std::isinf(b.energy.values()[i])) {
        EXPECT_TRUE(std::isinf(r.energy.values()[i]));
      } else {
        EXPECT_NEAR(r.energy.values()[i], b.energy.values()[i], 1e-9);
      }
    }
    EXPECT_LE(r.trace.envelopeOps(), 4 * static_cast<std::int64_t>(e1.size()));
  }
}

TEST(PairwiseMin2d, ZeroWeightsPropagateTheMinimum) {
  Grid<double> e1(7, 5, 3.0);
  const Point p{2, 3};
  e1[p] = -1.0;
  const auto r = pairwiseMin2d(e1, 0.0, 0.0, 1.0, -1.0);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 7; ++x) {
      if (e1.contains(2 * x - p.x, 2 * y - p.y)) {
        EXPECT_EQ(r.energy(x, y), -1.0);
      }
    }
  }
}

TEST(PairwiseMin2d, RejectsNegativeWeightByName) {
  Grid<double> e1(3, 3, 0.0);
  try {
    pairwiseMin2d(e1, 1.0, -0.5, 0.0, 0.0);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("wy"), std::string::npos);
  }
  EXPECT_THROW(pairwiseMin2d(e1, -1.0, 0.0, 0.0, 0.0), InvalidArgument);
}

}  // namespace
}  // namespace compshape::gridmath
