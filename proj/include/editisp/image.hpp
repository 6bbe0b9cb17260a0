#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "editisp/errors.hpp"
#include "editisp/rng.hpp"
#include "editisp/vecmat.hpp"

namespace editisp {

struct RawTag {};
struct SrgbTag {};

/// Planar-agnostic RGB image, doubles, interleaved data[(y*w + x)*3 + c].
/// The tag encodes the colorimetric state of the pixels so raw-domain and
/// display-domain images cannot be mixed up at compile time.
template <typename Tag>
class BasicImage {
public:
    BasicImage() = default;

    BasicImage(int height, int width) : h_(height), w_(width) {
        if (height <= 0 || width <= 0)
            throw ArgumentError("BasicImage: dimensions must be positive");
        data_.assign(static_cast<std::size_t>(height) * width * 3, 0.0);
    }

    int height() const { return h_; }
    int width() const { return w_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(h_) * w_; }
    bool empty() const { return data_.empty(); }

    double& at(int y, int x, int c) { return data_[idx(y, x, c)]; }
    double at(int y, int x, int c) const { return data_[idx(y, x, c)]; }

    Vec3 pixel(int y, int x) const {
        const std::size_t i = idx(y, x, 0);
        return {data_[i], data_[i + 1], data_[i + 2]};
    }

    void set_pixel(int y, int x, const Vec3& v) {
        const std::size_t i = idx(y, x, 0);
        data_[i] = v.r;
        data_[i + 1] = v.g;
        data_[i + 2] = v.b;
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::size_t size() const { return data_.size(); }

    BasicImage crop(int y0, int x0, int height, int width) const {
        if (y0 < 0 || x0 < 0 || y0 + height > h_ || x0 + width > w_)
            throw ArgumentError("crop: window out of bounds");
        BasicImage out(height, width);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                for (int c = 0; c < 3; ++c) out.at(y, x, c) = at(y0 + y, x0 + x, c);
        return out;
    }

private:
    std::size_t idx(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * w_ + x) * 3 + c;
    }

    int h_ = 0, w_ = 0;
    std::vector<double> data_;
};

using RawImage = BasicImage<RawTag>;
using SrgbImage = BasicImage<SrgbTag>;

/// Per-pixel inclusion mask for masked losses. Stored row-major.
class SampleMask {
public:
    SampleMask() = default;

    SampleMask(int height, int width, bool initial = false)
        : h_(height), w_(width), bits_(static_cast<std::size_t>(height) * width, initial) {
        if (height <= 0 || width <= 0)
            throw ArgumentError("SampleMask: dimensions must be positive");
    }

    int height() const { return h_; }
    int width() const { return w_; }

    bool at(int y, int x) const { return bits_[static_cast<std::size_t>(y) * w_ + x]; }
    void set(int y, int x, bool v) { bits_[static_cast<std::size_t>(y) * w_ + x] = v; }

    std::size_t count() const {
        std::size_t n = 0;
        for (bool b : bits_) n += b ? 1 : 0;
        return n;
    }

private:
    int h_ = 0, w_ = 0;
    std::vector<bool> bits_;
};

/// Capture-time metadata carried beside each raw image.
struct ImageMeta {
    Vec2 asn{1.0, 1.0};        // as-shot neutral (r/g, b/g)
    Mat3 cst_a = Mat3::identity();  // camera-to-XYZ under the warm anchor
    Mat3 cst_b = Mat3::identity();  // camera-to-XYZ under the cool anchor
    std::string scene_id;
};

/// Box-filter downsample by an integer factor. Each output pixel is the mean
/// of its factor x factor source block; dimensions must divide evenly.
template <typename Tag>
BasicImage<Tag> downsample(const BasicImage<Tag>& img, int factor) {
    if (factor <= 0) throw ArgumentError("downsample: factor must be positive");
    if (factor == 1) return img;
    if (img.height() % factor != 0 || img.width() % factor != 0)
        throw ArgumentError("downsample: dimensions not divisible by factor");
    const int oh = img.height() / factor;
    const int ow = img.width() / factor;
    BasicImage<Tag> out(oh, ow);
    const double inv = 1.0 / (static_cast<double>(factor) * factor);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            for (int c = 0; c < 3; ++c) {
                double s = 0.0;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx)
                        s += img.at(y * factor + dy, x * factor + dx, c);
                out.at(y, x, c) = s * inv;
            }
    return out;
}

/// Adjoint of downsample: spreads each gradient value uniformly over the
/// source block it averaged. (J^T v for the linear map above.)
template <typename Tag>
BasicImage<Tag> downsample_adjoint(const BasicImage<Tag>& grad, int factor, int out_h, int out_w) {
    if (factor <= 0) throw ArgumentError("downsample_adjoint: factor must be positive");
    if (grad.height() * factor != out_h || grad.width() * factor != out_w)
        throw ArgumentError("downsample_adjoint: shape mismatch");
    BasicImage<Tag> out(out_h, out_w);
    const double inv = 1.0 / (static_cast<double>(factor) * factor);
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = grad.at(y / factor, x / factor, c) * inv;
    return out;
}

/// Bilinear upsample by an integer factor, pixel centers aligned via
/// src = (dst + 0.5)/factor - 0.5 with edge clamping.
template <typename Tag>
BasicImage<Tag> upsample_bilinear(const BasicImage<Tag>& img, int factor) {
    if (factor <= 0) throw ArgumentError("upsample_bilinear: factor must be positive");
    if (factor == 1) return img;
    const int oh = img.height() * factor;
    const int ow = img.width() * factor;
    BasicImage<Tag> out(oh, ow);
    for (int y = 0; y < oh; ++y) {
        const double sy = (y + 0.5) / factor - 0.5;
        int y0 = static_cast<int>(std::floor(sy));
        const double fy = sy - y0;
        int y1 = y0 + 1;
        y0 = std::clamp(y0, 0, img.height() - 1);
        y1 = std::clamp(y1, 0, img.height() - 1);
        for (int x = 0; x < ow; ++x) {
            const double sx = (x + 0.5) / factor - 0.5;
            int x0 = static_cast<int>(std::floor(sx));
            const double fx = sx - x0;
            int x1 = x0 + 1;
            x0 = std::clamp(x0, 0, img.width() - 1);
            x1 = std::clamp(x1, 0, img.width() - 1);
            for (int c = 0; c < 3; ++c) {
                const double top = img.at(y0, x0, c) * (1.0 - fx) + img.at(y0, x1, c) * fx;
                const double bot = img.at(y1, x0, c) * (1.0 - fx) + img.at(y1, x1, c) * fx;
                out.at(y, x, c) = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    return out;
}

struct PatchWindow {
    int y0 = 0;
    int x0 = 0;
    int side = 0;
};

/// Pick a square crop window of ~pixel_budget pixels whose origin lies on the
/// align grid. Deterministic given the rng state.
inline PatchWindow random_patch_window(int height, int width, int pixel_budget, int align,
                                       Rng& rng) {
    if (pixel_budget <= 0) throw ArgumentError("random_patch_window: budget must be positive");
    if (align <= 0) throw ArgumentError("random_patch_window: align must be positive");
    int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(pixel_budget))));
    side = (side / align) * align;
    if (side < align) side = align;
    side = std::min({side, (height / align) * align, (width / align) * align});
    if (side <= 0) throw ArgumentError("random_patch_window: image smaller than align grid");
    const int ymax = (height - side) / align;
    const int xmax = (width - side) / align;
    PatchWindow w;
    w.side = side;
    w.y0 = rng.uniform_int(0, ymax) * align;
    w.x0 = rng.uniform_int(0, xmax) * align;
    return w;
}

}  // namespace editisp
