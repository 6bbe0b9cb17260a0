#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "editisp/errors.hpp"
#include "editisp/image.hpp"

namespace editisp {

namespace detail {

inline void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

inline void put_u16be(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xFF));
}

inline void put_u32be(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v >> 24));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>(v & 0xFF));
}

inline void put_u64be(std::string& out, std::uint64_t v) {
    for (int i = 7; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

/// IEEE-754 bit pattern, big-endian. Exact round trip for every double
/// including negative zero.
inline void put_f64be(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64be(out, bits);
}

class ByteReader {
public:
    ByteReader(const std::string& buf, const std::string& what) : buf_(buf), what_(what) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf_[pos_++]);
    }

    std::uint16_t u16be() {
        need(2);
        const auto hi = static_cast<std::uint8_t>(buf_[pos_]);
        const auto lo = static_cast<std::uint8_t>(buf_[pos_ + 1]);
        pos_ += 2;
        return static_cast<std::uint16_t>((hi << 8) | lo);
    }

    std::uint32_t u32be() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<std::uint8_t>(buf_[pos_ + i]);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64be() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v = (v << 8) | static_cast<std::uint8_t>(buf_[pos_ + i]);
        pos_ += 8;
        return v;
    }

    double f64be() {
        const std::uint64_t bits = u64be();
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }

    std::string bytes(std::size_t n) {
        need(n);
        std::string out = buf_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t remaining() const { return buf_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > buf_.size())
            throw CorruptFileError(what_ + ": truncated (needed " + std::to_string(n) +
                                   " bytes at offset " + std::to_string(pos_) + ")");
    }

    const std::string& buf_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failure: " + path);
    return buf;
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failure: " + path);
}

/// Round to nearest integer, ties to even. std::nearbyint honors the
/// default FE_TONEAREST mode which is exactly this rule.
inline std::uint16_t quantize16(double v) {
    const double scaled = std::clamp(v, 0.0, 1.0) * 65535.0;
    return static_cast<std::uint16_t>(std::nearbyint(scaled));
}

inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace detail

inline constexpr std::uint16_t kRawpVersion = 1;

/// Quantized image container: "RAWP" magic, version, dimensions, channel
/// count (always 3) and colorspace tag, followed by planar big-endian u16
/// samples (all R, then G, then B). Values quantize as round-half-even of
/// clamp(v, 0, 1) * 65535.
enum class Colorspace : std::uint8_t { Linear = 0, Srgb = 1 };

namespace detail {

inline std::string encode_rawp(const double* data, int h, int w, Colorspace cs) {
    std::string out;
    const std::size_t n = static_cast<std::size_t>(h) * w;
    out.reserve(16 + n * 6);
    out += "RAWP";
    put_u16be(out, kRawpVersion);
    put_u32be(out, static_cast<std::uint32_t>(h));
    put_u32be(out, static_cast<std::uint32_t>(w));
    put_u8(out, 3);
    put_u8(out, static_cast<std::uint8_t>(cs));
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < n; ++i) put_u16be(out, quantize16(data[i * 3 + c]));
    return out;
}

struct RawpPayload {
    int h = 0, w = 0;
    Colorspace cs = Colorspace::Linear;
    std::vector<double> data;  // interleaved
};

inline RawpPayload decode_rawp(const std::string& buf, const std::string& what) {
    ByteReader r(buf, what);
    if (r.bytes(4) != "RAWP") throw FormatError(what + ": bad magic");
    const auto version = r.u16be();
    if (version != kRawpVersion)
        throw FormatError(what + ": unsupported version " + std::to_string(version));
    RawpPayload out;
    out.h = static_cast<int>(r.u32be());
    out.w = static_cast<int>(r.u32be());
    const auto channels = r.u8();
    if (channels != 3) throw FormatError(what + ": expected 3 channels");
    const auto cs = r.u8();
    if (cs > 1) throw FormatError(what + ": unknown colorspace tag");
    out.cs = static_cast<Colorspace>(cs);
    if (out.h <= 0 || out.w <= 0) throw CorruptFileError(what + ": empty dimensions");
    const std::size_t n = static_cast<std::size_t>(out.h) * out.w;
    if (r.remaining() != n * 6)
        throw CorruptFileError(what + ": payload size mismatch");
    out.data.assign(n * 3, 0.0);
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < n; ++i)
            out.data[i * 3 + c] = static_cast<double>(r.u16be()) / 65535.0;
    return out;
}

inline std::string sidecar_path(const std::string& image_path) {
    std::filesystem::path p(image_path);
    p.replace_extension();
    return p.string() + ".meta.json";
}

// Matrices live in the sidecar as flat row-major 9-number arrays.
inline nlohmann::json mat3_to_json(const Mat3& m) {
    nlohmann::json flat = nlohmann::json::array();
    for (int i = 0; i < 9; ++i) flat.push_back(m.m[i]);
    return flat;
}

inline Mat3 mat3_from_json(const nlohmann::json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 9)
        throw FormatError(what + ": matrix must be a flat 9-number array");
    Mat3 out;
    for (int i = 0; i < 9; ++i) out.m[i] = j[i].get<double>();
    return out;
}

}  // namespace detail

inline void save_rawp(const std::string& path, const RawImage& img) {
    detail::write_file(path, detail::encode_rawp(img.data(), img.height(), img.width(),
                                                 Colorspace::Linear));
}

inline void save_rawp(const std::string& path, const SrgbImage& img) {
    detail::write_file(path, detail::encode_rawp(img.data(), img.height(), img.width(),
                                                 Colorspace::Srgb));
}

inline Colorspace peek_colorspace(const std::string& path) {
    const std::string buf = detail::read_file(path);
    return detail::decode_rawp(buf, path).cs;
}

inline RawImage load_rawp_linear(const std::string& path) {
    const std::string buf = detail::read_file(path);
    auto payload = detail::decode_rawp(buf, path);
    if (payload.cs != Colorspace::Linear)
        throw FormatError(path + ": expected linear colorspace");
    RawImage img(payload.h, payload.w);
    std::copy(payload.data.begin(), payload.data.end(), img.data());
    return img;
}

inline SrgbImage load_rawp_srgb(const std::string& path) {
    const std::string buf = detail::read_file(path);
    auto payload = detail::decode_rawp(buf, path);
    if (payload.cs != Colorspace::Srgb)
        throw FormatError(path + ": expected sRGB colorspace");
    SrgbImage img(payload.h, payload.w);
    std::copy(payload.data.begin(), payload.data.end(), img.data());
    return img;
}

inline void save_meta(const std::string& image_path, const ImageMeta& meta) {
    nlohmann::json j;
    j["asn"] = {meta.asn.x, meta.asn.y};
    j["cst_a"] = detail::mat3_to_json(meta.cst_a);
    j["cst_b"] = detail::mat3_to_json(meta.cst_b);
    j["scene_id"] = meta.scene_id;
    detail::write_file(detail::sidecar_path(image_path), j.dump(2) + "\n");
}

inline ImageMeta load_meta(const std::string& image_path) {
    const std::string side = detail::sidecar_path(image_path);
    const std::string buf = detail::read_file(side);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(buf);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(side + ": invalid JSON: " + e.what());
    }
    ImageMeta meta;
    try {
        const auto& asn = j.at("asn");
        if (!asn.is_array() || asn.size() != 2)
            throw FormatError(side + ": asn must be a 2-element array");
        meta.asn = {asn[0].get<double>(), asn[1].get<double>()};
        meta.cst_a = detail::mat3_from_json(j.at("cst_a"), side);
        meta.cst_b = detail::mat3_from_json(j.at("cst_b"), side);
        meta.scene_id = j.at("scene_id").get<std::string>();
    } catch (const nlohmann::json::out_of_range& e) {
        throw FormatError(side + ": missing field: " + e.what());
    } catch (const nlohmann::json::type_error& e) {
        throw FormatError(side + ": wrong field type: " + e.what());
    }
    return meta;
}

}  // namespace editisp
