#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <vector>

#include "editisp/parallel.hpp"
#include "editisp/rng.hpp"
#include "editisp/vecmat.hpp"

namespace {

using namespace editisp;

TEST(Rng, DeterministicAcrossInstances) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, Uniform01Range) {
    Rng rng(7);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform01();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
    }
}

TEST(Rng, UniformIntCoversInclusiveRange) {
    Rng rng(3);
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 20000; ++i) {
        const int v = rng.uniform_int(2, 6);
        ASSERT_GE(v, 2);
        ASSERT_LE(v, 6);
        counts[v - 2]++;
    }
    for (int c : counts) EXPECT_GT(c, 3000);
}

TEST(Rng, NormalMomentsApproximatelyStandard) {
    Rng rng(11);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        sum += v;
        sumsq += v * v;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    EXPECT_NEAR(mean, 0.0, 0.02);
    EXPECT_NEAR(var, 1.0, 0.03);
}

TEST(Rng, ChildStreamsIndependentOfParentAdvance) {
    Rng a(99);
    Rng c1 = a.child(5);
    a.next_u64();
    a.next_u64();
    Rng c2 = a.child(5);
    EXPECT_EQ(c1.next_u64(), c2.next_u64());
}

TEST(Rng, ChildStreamsDiffer) {
    Rng a(99);
    EXPECT_NE(a.child(1).next_u64(), a.child(2).next_u64());
}

TEST(Mat3, InverseRecoversIdentity) {
    Mat3 m;
    m(0, 0) = 2.0; m(0, 1) = 0.3; m(0, 2) = -0.1;
    m(1, 0) = 0.2; m(1, 1) = 1.5; m(1, 2) = 0.4;
    m(2, 0) = -0.3; m(2, 1) = 0.1; m(2, 2) = 0.9;
    const Mat3 p = m * m.inverse();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            EXPECT_NEAR(p(i, j), i == j ? 1.0 : 0.0, 1e-12);
}

TEST(Mat3, SolveMatchesMultiply) {
    Mat3 m;
    m(0, 0) = 1.2; m(0, 1) = 0.1; m(0, 2) = 0.0;
    m(1, 0) = 0.0; m(1, 1) = 0.8; m(1, 2) = 0.2;
    m(2, 0) = 0.3; m(2, 1) = 0.0; m(2, 2) = 1.1;
    const Vec3 x{0.4, -0.7, 1.3};
    const Vec3 b = m * x;
    const Vec3 got = m.solve(b);
    EXPECT_NEAR(got.r, x.r, 1e-12);
    EXPECT_NEAR(got.g, x.g, 1e-12);
    EXPECT_NEAR(got.b, x.b, 1e-12);
}

TEST(Mat3, SingularThrows) {
    Mat3 m;  // all zeros
    EXPECT_THROW(m.inverse(), NumericError);
}

TEST(Sym2, CholeskyReconstructsCovariance) {
    Sym2 s{0.9, 0.25, 0.5};
    const auto l = s.cholesky();
    EXPECT_NEAR(l[0] * l[0], s.a, 1e-12);
    EXPECT_NEAR(l[0] * l[1], s.b, 1e-12);
    EXPECT_NEAR(l[1] * l[1] + l[2] * l[2], s.c, 1e-12);
}

TEST(Parallel, CoversAllIndicesOnce) {
    const std::size_t n = 1000;
    std::vector<std::atomic<int>> hits(n);
    parallel_for(n, 4, [&](std::size_t i) { hits[i]++; });
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(hits[i].load(), 1);
}

TEST(Parallel, SerialFallback) {
    std::vector<int> order;
    parallel_for(5, 1, [&](std::size_t i) { order.push_back(static_cast<int>(i)); });
    ASSERT_EQ(order.size(), 5u);
    for (int i = 0; i < 5; ++i) EXPECT_EQ(order[i], i);
}

}  // namespace
