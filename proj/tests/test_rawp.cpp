#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "editisp/rawp.hpp"
#include "editisp/rng.hpp"

namespace {

using namespace editisp;

class RawpTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = std::filesystem::temp_directory_path() /
               ("rawp_test_" + std::to_string(::getpid()));
        std::filesystem::create_directories(dir_);
    }
    void TearDown() override { std::filesystem::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    std::filesystem::path dir_;
};

TEST_F(RawpTest, RoundTripWithinHalfQuantum) {
    Rng rng(21);
    RawImage img(7, 5);
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 5; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = rng.uniform01();
    save_rawp(path("a.rawp"), img);
    const RawImage back = load_rawp_linear(path("a.rawp"));
    ASSERT_EQ(back.height(), 7);
    ASSERT_EQ(back.width(), 5);
    for (std::size_t i = 0; i < img.size(); ++i)
        EXPECT_NEAR(back.data()[i], img.data()[i], 0.5 / 65535.0 + 1e-12);
}

TEST_F(RawpTest, SaveLoadIsIdempotent) {
    Rng rng(22);
    RawImage img(4, 4);
    for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = rng.uniform01();
    save_rawp(path("a.rawp"), img);
    const RawImage once = load_rawp_linear(path("a.rawp"));
    save_rawp(path("b.rawp"), once);
    const RawImage twice = load_rawp_linear(path("b.rawp"));
    for (std::size_t i = 0; i < once.size(); ++i)
        EXPECT_DOUBLE_EQ(once.data()[i], twice.data()[i]);
}

TEST_F(RawpTest, QuantizationTiesToEven) {
    // 0.5 scales to 32767.5 which rounds to the even 32768; 0.5/65535 scales
    // to exactly 0.5 which rounds down to the even 0.
    RawImage img(1, 3);
    for (int c = 0; c < 3; ++c) {
        img.at(0, 0, c) = 0.5;
        img.at(0, 1, c) = 0.5 / 65535.0;
        img.at(0, 2, c) = 1.5 / 65535.0;
    }
    save_rawp(path("q.rawp"), img);
    std::ifstream in(path("q.rawp"), std::ios::binary);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    // Header is 16 bytes; payload starts with the red plane.
    const auto sample = [&](int i) {
        const auto hi = static_cast<std::uint8_t>(buf[16 + 2 * i]);
        const auto lo = static_cast<std::uint8_t>(buf[16 + 2 * i + 1]);
        return (hi << 8) | lo;
    };
    EXPECT_EQ(sample(0), 32768);
    EXPECT_EQ(sample(1), 0);
    EXPECT_EQ(sample(2), 2);
}

TEST_F(RawpTest, OutOfRangeValuesClamp) {
    RawImage img(1, 2);
    for (int c = 0; c < 3; ++c) {
        img.at(0, 0, c) = -0.5;
        img.at(0, 1, c) = 2.0;
    }
    save_rawp(path("c.rawp"), img);
    const RawImage back = load_rawp_linear(path("c.rawp"));
    EXPECT_DOUBLE_EQ(back.at(0, 0, 0), 0.0);
    EXPECT_DOUBLE_EQ(back.at(0, 1, 0), 1.0);
}

TEST_F(RawpTest, HeaderLayoutIsBigEndian) {
    RawImage img(2, 3);
    save_rawp(path("h.rawp"), img);
    std::ifstream in(path("h.rawp"), std::ios::binary);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ASSERT_GE(buf.size(), 16u);
    EXPECT_EQ(buf.substr(0, 4), "RAWP");
    EXPECT_EQ(static_cast<std::uint8_t>(buf[4]), 0);  // version hi
    EXPECT_EQ(static_cast<std::uint8_t>(buf[5]), 1);  // version lo
    // height = 2 as u32be
    EXPECT_EQ(static_cast<std::uint8_t>(buf[9]), 2);
    // width = 3 as u32be
    EXPECT_EQ(static_cast<std::uint8_t>(buf[13]), 3);
    EXPECT_EQ(static_cast<std::uint8_t>(buf[14]), 3);  // channels
    EXPECT_EQ(static_cast<std::uint8_t>(buf[15]), 0);  // linear tag
    EXPECT_EQ(buf.size(), 16u + 2u * 3u * 6u);
}

TEST_F(RawpTest, ColorspaceTagEnforced) {
    SrgbImage img(2, 2);
    save_rawp(path("s.rawp"), img);
    EXPECT_EQ(peek_colorspace(path("s.rawp")), Colorspace::Srgb);
    EXPECT_NO_THROW(load_rawp_srgb(path("s.rawp")));
    EXPECT_THROW(load_rawp_linear(path("s.rawp")), FormatError);
}

TEST_F(RawpTest, BadMagicThrowsFormatError) {
    std::ofstream out(path("bad.rawp"), std::ios::binary);
    out << "JUNKJUNKJUNKJUNKJUNKJUNK";
    out.close();
    EXPECT_THROW(load_rawp_linear(path("bad.rawp")), FormatError);
}

TEST_F(RawpTest, TruncatedPayloadThrowsCorrupt) {
    RawImage img(4, 4);
    save_rawp(path("t.rawp"), img);
    std::ifstream in(path("t.rawp"), std::ios::binary);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    buf.resize(buf.size() - 7);
    std::ofstream out(path("t.rawp"), std::ios::binary | std::ios::trunc);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    out.close();
    EXPECT_THROW(load_rawp_linear(path("t.rawp")), CorruptFileError);
}

TEST_F(RawpTest, MissingFileThrowsIoError) {
    EXPECT_THROW(load_rawp_linear(path("nope.rawp")), IoError);
}

TEST_F(RawpTest, MetaSidecarRoundTrip) {
    ImageMeta meta;
    meta.asn = {0.83, 0.61};
    meta.cst_a = Mat3::diag(1.1, 0.9, 1.3);
    meta.cst_a(0, 1) = -0.05;
    meta.cst_b = Mat3::identity();
    meta.cst_b(2, 0) = 0.02;
    meta.scene_id = "scene_0042";
    save_meta(path("img.rawp"), meta);
    EXPECT_TRUE(std::filesystem::exists(path("img.meta.json")));
    const ImageMeta back = load_meta(path("img.rawp"));
    EXPECT_DOUBLE_EQ(back.asn.x, 0.83);
    EXPECT_DOUBLE_EQ(back.asn.y, 0.61);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            EXPECT_DOUBLE_EQ(back.cst_a(i, j), meta.cst_a(i, j));
            EXPECT_DOUBLE_EQ(back.cst_b(i, j), meta.cst_b(i, j));
        }
    EXPECT_EQ(back.scene_id, "scene_0042");
}

TEST_F(RawpTest, MetaMissingFieldThrows) {
    std::ofstream out(path("img.meta.json"));
    out << "{\"asn\": [0.8, 0.6]}";
    out.close();
    EXPECT_THROW(load_meta(path("img.rawp")), FormatError);
}

}  // namespace
