#pragma once

#include <cmath>

#include "editisp/vecmat.hpp"

namespace editisp {

/// Colorimetric constants derived from the sRGB primaries
/// R=(0.64,0.33) G=(0.30,0.60) B=(0.15,0.06) and the D65 white point
/// (0.3127,0.3290). The matrices are solved at first use in full double
/// precision; the resulting values are, to 17 significant digits:
///
///   sRGB->XYZ   0.41239079926595951  0.35758433938387796  0.18048078840183429
///               0.21263900587151036  0.71516867876775592  0.072192315360733714
///               0.019330818715591849 0.11919477979462599  0.95053215224966059
///
///   XYZ->sRGB   3.2409699419045213  -1.5373831775700935  -0.49861076029300327
///              -0.96924363628087984  1.8759675015077206   0.041555057407175612
///               0.055630079696993608 -0.20397695888897657 1.0569715142428786
///
///   white XYZ   0.9504559270516717   1.0                  1.0890577507598784
namespace color {

namespace detail {

struct Derived {
    Mat3 rgb_to_xyz;
    Mat3 xyz_to_rgb;
    Vec3 white_xyz;
};

inline Derived derive() {
    const double px[3] = {0.64, 0.30, 0.15};
    const double py[3] = {0.33, 0.60, 0.06};
    const double wx = 0.3127, wy = 0.3290;

    Mat3 cols;  // column c = primary c's XYZ at unit luminance
    for (int c = 0; c < 3; ++c) {
        cols(0, c) = px[c] / py[c];
        cols(1, c) = 1.0;
        cols(2, c) = (1.0 - px[c] - py[c]) / py[c];
    }
    const Vec3 white{wx / wy, 1.0, (1.0 - wx - wy) / wy};
    const Vec3 s = cols.solve(white);

    Derived d;
    for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 3; ++c) d.rgb_to_xyz(i, c) = cols(i, c) * s[c];
    d.xyz_to_rgb = d.rgb_to_xyz.inverse();
    d.white_xyz = white;
    return d;
}

inline const Derived& derived() {
    static const Derived d = derive();
    return d;
}

}  // namespace detail

/// Linear sRGB -> CIE XYZ.
inline const Mat3& srgb_to_xyz() { return detail::derived().rgb_to_xyz; }

/// CIE XYZ -> linear sRGB. This is the pipeline's T matrix.
inline const Mat3& xyz_to_srgb() { return detail::derived().xyz_to_rgb; }

inline const Vec3& d65_white_xyz() { return detail::derived().white_xyz; }

/// CIE XYZ -> CIELAB under D65.
inline Vec3 xyz_to_lab(const Vec3& xyz) {
    const Vec3& wn = d65_white_xyz();
    const auto f = [](double t) {
        constexpr double cube = (6.0 / 29.0) * (6.0 / 29.0) * (6.0 / 29.0);
        if (t > cube) return std::cbrt(t);
        return t / (3.0 * (6.0 / 29.0) * (6.0 / 29.0)) + 4.0 / 29.0;
    };
    const double fx = f(xyz.r / wn.r);
    const double fy = f(xyz.g / wn.g);
    const double fz = f(xyz.b / wn.b);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

/// Display value -> linear, matching the rendering pipeline's pure 1/2.2
/// encoding gamma (not the piecewise sRGB EOTF).
inline double display_to_linear(double v) { return std::pow(std::max(v, 0.0), 2.2); }

}  // namespace color

}  // namespace editisp
