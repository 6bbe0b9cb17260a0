#include <gtest/gtest.h>

#include <cmath>

#include "editisp/image.hpp"
#include "editisp/rng.hpp"

namespace {

using namespace editisp;

RawImage random_image(int h, int w, Rng& rng) {
    RawImage img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = rng.uniform01();
    return img;
}

TEST(Image, PixelAccessorsRoundTrip) {
    RawImage img(3, 4);
    img.set_pixel(1, 2, {0.1, 0.2, 0.3});
    const Vec3 v = img.pixel(1, 2);
    EXPECT_DOUBLE_EQ(v.r, 0.1);
    EXPECT_DOUBLE_EQ(v.g, 0.2);
    EXPECT_DOUBLE_EQ(v.b, 0.3);
    EXPECT_DOUBLE_EQ(img.at(1, 2, 1), 0.2);
}

TEST(Image, CropExtractsWindow) {
    Rng rng(1);
    const RawImage img = random_image(6, 8, rng);
    const RawImage c = img.crop(2, 3, 3, 4);
    ASSERT_EQ(c.height(), 3);
    ASSERT_EQ(c.width(), 4);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x)
            for (int ch = 0; ch < 3; ++ch)
                EXPECT_DOUBLE_EQ(c.at(y, x, ch), img.at(2 + y, 3 + x, ch));
    EXPECT_THROW(img.crop(4, 0, 3, 4), ArgumentError);
}

TEST(Downsample, HandComputedBlockMeans) {
    RawImage img(2, 4);
    const double vals[2][4] = {{0.0, 0.2, 0.4, 0.6}, {0.8, 1.0, 0.1, 0.3}};
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 4; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = vals[y][x];
    const RawImage d = downsample(img, 2);
    ASSERT_EQ(d.height(), 1);
    ASSERT_EQ(d.width(), 2);
    EXPECT_NEAR(d.at(0, 0, 0), (0.0 + 0.2 + 0.8 + 1.0) / 4.0, 1e-15);
    EXPECT_NEAR(d.at(0, 1, 0), (0.4 + 0.6 + 0.1 + 0.3) / 4.0, 1e-15);
}

TEST(Downsample, BlockMeanOracle) {
    Rng rng(5);
    const RawImage img = random_image(16, 24, rng);
    const int f = 4;
    const RawImage d = downsample(img, f);
    ASSERT_EQ(d.height(), 4);
    ASSERT_EQ(d.width(), 6);
    for (int y = 0; y < d.height(); ++y)
        for (int x = 0; x < d.width(); ++x)
            for (int c = 0; c < 3; ++c) {
                double s = 0.0;
                for (int dy = 0; dy < f; ++dy)
                    for (int dx = 0; dx < f; ++dx) s += img.at(y * f + dy, x * f + dx, c);
                EXPECT_NEAR(d.at(y, x, c), s / (f * f), 1e-14);
            }
}

TEST(Downsample, RejectsNonDivisibleDims) {
    RawImage img(5, 8);
    EXPECT_THROW(downsample(img, 2), ArgumentError);
}

TEST(DownsampleAdjoint, InnerProductIdentity) {
    // <D x, y> == <x, D^T y> for the averaging map D.
    Rng rng(9);
    const RawImage x = random_image(8, 8, rng);
    const RawImage y = random_image(2, 2, rng);
    const RawImage dx = downsample(x, 4);
    const RawImage dty = downsample_adjoint(y, 4, 8, 8);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < dx.size(); ++i) lhs += dx.data()[i] * y.data()[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x.data()[i] * dty.data()[i];
    EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(Upsample, ConstantStaysConstant) {
    RawImage img(2, 2);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = 0.37;
    const RawImage u = upsample_bilinear(img, 4);
    ASSERT_EQ(u.height(), 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) EXPECT_NEAR(u.at(y, x, 0), 0.37, 1e-15);
}

TEST(Upsample, CenterAlignedWeightsFactor2) {
    // Two-pixel row [a, b] upsampled x2 gives [a, .75a+.25b, .25a+.75b, b].
    RawImage img(1, 2);
    const double a = 0.2, b = 0.9;
    for (int c = 0; c < 3; ++c) {
        img.at(0, 0, c) = a;
        img.at(0, 1, c) = b;
    }
    const RawImage u = upsample_bilinear(img, 2);
    ASSERT_EQ(u.width(), 4);
    EXPECT_NEAR(u.at(0, 0, 0), a, 1e-15);
    EXPECT_NEAR(u.at(0, 1, 0), 0.75 * a + 0.25 * b, 1e-15);
    EXPECT_NEAR(u.at(0, 2, 0), 0.25 * a + 0.75 * b, 1e-15);
    EXPECT_NEAR(u.at(0, 3, 0), b, 1e-15);
}

TEST(Upsample, RampReconstructionError) {
    // A downsampled linear ramp upsamples back close to the original away
    // from edge clamping; interior error stays under 1/64.
    const int n = 32;
    RawImage img(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<double>(x) / (n - 1);
    const RawImage u = upsample_bilinear(downsample(img, 8), 8);
    for (int y = 8; y < n - 8; ++y)
        for (int x = 8; x < n - 8; ++x)
            EXPECT_NEAR(u.at(y, x, 0), img.at(y, x, 0), 1.0 / 64.0);
}

TEST(SampleMask, CountAndAccess) {
    SampleMask m(4, 4);
    EXPECT_EQ(m.count(), 0u);
    m.set(1, 2, true);
    m.set(3, 3, true);
    EXPECT_TRUE(m.at(1, 2));
    EXPECT_FALSE(m.at(0, 0));
    EXPECT_EQ(m.count(), 2u);
}

TEST(PatchWindow, AlignedAndInBounds) {
    Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        const auto w = random_patch_window(64, 96, 1024, 8, rng);
        EXPECT_EQ(w.side, 32);
        EXPECT_EQ(w.y0 % 8, 0);
        EXPECT_EQ(w.x0 % 8, 0);
        EXPECT_LE(w.y0 + w.side, 64);
        EXPECT_LE(w.x0 + w.side, 96);
    }
}

TEST(PatchWindow, ClampsToImage) {
    Rng rng(14);
    const auto w = random_patch_window(16, 16, 4096, 8, rng);
    EXPECT_EQ(w.side, 16);
    EXPECT_EQ(w.y0, 0);
    EXPECT_EQ(w.x0, 0);
}

}  // namespace
