#pragma once

// Image quality metrics. PSNR is capped so identical images stay finite in
// CSV output; SSIM uses 8x8 uniform windows with the standard K1/K2
// constants; color difference is CIE76 in Lab after the display transfer.

#include <algorithm>
#include <cmath>

#include "editisp/color.hpp"
#include "editisp/errors.hpp"
#include "editisp/image.hpp"
#include "editisp/vecmat.hpp"

namespace editisp {

inline constexpr double kPsnrCap = 100.0;
inline constexpr int kSsimWindow = 8;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

namespace detail {

template <typename Tag>
void require_same_shape(const BasicImage<Tag>& a, const BasicImage<Tag>& b,
                        const char* what) {
    if (a.height() != b.height() || a.width() != b.width())
        throw ArgumentError(std::string(what) + ": shape mismatch");
}

}  // namespace detail

template <typename Tag>
double psnr(const BasicImage<Tag>& a, const BasicImage<Tag>& b) {
    detail::require_same_shape(a, b, "psnr");
    double se = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a.data()[k] - b.data()[k];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.size());
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

/// Mean local SSIM over all 8x8 windows (stride 1, uniform weights), averaged
/// across channels. Dynamic range L = 1.
template <typename Tag>
double ssim(const BasicImage<Tag>& a, const BasicImage<Tag>& b) {
    detail::require_same_shape(a, b, "ssim");
    const int h = a.height(), w = a.width();
    if (h < kSsimWindow || w < kSsimWindow)
        throw ArgumentError("ssim: image smaller than the window");
    constexpr double c1 = kSsimK1 * kSsimK1;
    constexpr double c2 = kSsimK2 * kSsimK2;
    constexpr int n = kSsimWindow * kSsimWindow;

    double total = 0.0;
    std::size_t windows = 0;
    for (int c = 0; c < 3; ++c)
        for (int y0 = 0; y0 + kSsimWindow <= h; ++y0)
            for (int x0 = 0; x0 + kSsimWindow <= w; ++x0) {
                double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
                for (int y = y0; y < y0 + kSsimWindow; ++y)
                    for (int x = x0; x < x0 + kSsimWindow; ++x) {
                        const double va = a.at(y, x, c), vb = b.at(y, x, c);
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                const double ma = sa / n, mb = sb / n;
                const double va = saa / n - ma * ma;
                const double vb = sbb / n - mb * mb;
                const double cov = sab / n - ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                         ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++windows;
            }
    return total / static_cast<double>(windows);
}

namespace detail {

inline Vec3 display_to_lab(double r, double g, double b) {
    const Vec3 lin{color::display_to_linear(r), color::display_to_linear(g),
                   color::display_to_linear(b)};
    return color::xyz_to_lab(color::srgb_to_xyz() * lin);
}

}  // namespace detail

/// Mean per-pixel CIE76 color difference. Inputs are display-encoded values
/// in [0,1]; they pass through the 2.2 transfer, the sRGB matrix, and the D65
/// Lab conversion before the Euclidean distance is taken.
template <typename Tag>
double delta_e(const BasicImage<Tag>& a, const BasicImage<Tag>& b) {
    detail::require_same_shape(a, b, "delta_e");
    double total = 0.0;
    const std::size_t n = static_cast<std::size_t>(a.height()) * a.width();
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x) {
            // Identical pixels are exactly zero distance; skipping them keeps
            // the d(p,p)=0 identity immune to contraction differences between
            // the two inlined conversion call sites.
            if (a.at(y, x, 0) == b.at(y, x, 0) && a.at(y, x, 1) == b.at(y, x, 1) &&
                a.at(y, x, 2) == b.at(y, x, 2))
                continue;
            const Vec3 la = detail::display_to_lab(a.at(y, x, 0), a.at(y, x, 1), a.at(y, x, 2));
            const Vec3 lb = detail::display_to_lab(b.at(y, x, 0), b.at(y, x, 1), b.at(y, x, 2));
            const double dr = la.r - lb.r, dg = la.g - lb.g, db = la.b - lb.b;
            total += std::sqrt(dr * dr + dg * dg + db * db);
        }
    return total / static_cast<double>(n);
}

}  // namespace editisp
