#pragma once

#include <array>
#include <cmath>

#include "editisp/errors.hpp"

namespace editisp {

struct Vec2 {
    double x = 0.0, y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::sqrt(x * x + y * y); }
};

struct Vec3 {
    double r = 0.0, g = 0.0, b = 0.0;

    double& operator[](int i) { return i == 0 ? r : (i == 1 ? g : b); }
    double operator[](int i) const { return i == 0 ? r : (i == 1 ? g : b); }

    Vec3 operator+(const Vec3& o) const { return {r + o.r, g + o.g, b + o.b}; }
    Vec3 operator-(const Vec3& o) const { return {r - o.r, g - o.g, b - o.b}; }
    Vec3 operator*(double s) const { return {r * s, g * s, b * s}; }
    double dot(const Vec3& o) const { return r * o.r + g * o.g + b * o.b; }
};

/// Row-major 3x3 matrix.
struct Mat3 {
    std::array<double, 9> m{};

    double& operator()(int row, int col) { return m[row * 3 + col]; }
    double operator()(int row, int col) const { return m[row * 3 + col]; }

    static Mat3 identity() {
        Mat3 out;
        out(0, 0) = out(1, 1) = out(2, 2) = 1.0;
        return out;
    }

    static Mat3 diag(double a, double b, double c) {
        Mat3 out;
        out(0, 0) = a;
        out(1, 1) = b;
        out(2, 2) = c;
        return out;
    }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.r + m[1] * v.g + m[2] * v.b,
                m[3] * v.r + m[4] * v.g + m[5] * v.b,
                m[6] * v.r + m[7] * v.g + m[8] * v.b};
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 out;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                out(i, j) = s;
            }
        return out;
    }

    Mat3 operator*(double s) const {
        Mat3 out;
        for (int i = 0; i < 9; ++i) out.m[i] = m[i] * s;
        return out;
    }

    Mat3 operator+(const Mat3& o) const {
        Mat3 out;
        for (int i = 0; i < 9; ++i) out.m[i] = m[i] + o.m[i];
        return out;
    }

    Mat3 transposed() const {
        Mat3 out;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) out(i, j) = (*this)(j, i);
        return out;
    }

    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) -
               m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    Mat3 inverse() const {
        const double d = det();
        if (std::abs(d) < 1e-300) throw NumericError("Mat3::inverse: singular matrix");
        const double inv = 1.0 / d;
        Mat3 out;
        out(0, 0) = (m[4] * m[8] - m[5] * m[7]) * inv;
        out(0, 1) = (m[2] * m[7] - m[1] * m[8]) * inv;
        out(0, 2) = (m[1] * m[5] - m[2] * m[4]) * inv;
        out(1, 0) = (m[5] * m[6] - m[3] * m[8]) * inv;
        out(1, 1) = (m[0] * m[8] - m[2] * m[6]) * inv;
        out(1, 2) = (m[2] * m[3] - m[0] * m[5]) * inv;
        out(2, 0) = (m[3] * m[7] - m[4] * m[6]) * inv;
        out(2, 1) = (m[1] * m[6] - m[0] * m[7]) * inv;
        out(2, 2) = (m[0] * m[4] - m[1] * m[3]) * inv;
        return out;
    }

    /// Solve (*this) x = b.
    Vec3 solve(const Vec3& b) const { return inverse() * b; }
};

/// Symmetric 2x2 covariance with Cholesky-style sampling support.
struct Sym2 {
    double a = 0.0;  // var(x)
    double b = 0.0;  // cov(x, y)
    double c = 0.0;  // var(y)

    /// Lower-triangular L with L L^T = covariance. Degenerate axes collapse
    /// to zero rather than producing NaN.
    std::array<double, 3> cholesky() const {
        const double l00 = a > 0.0 ? std::sqrt(a) : 0.0;
        const double l10 = l00 > 0.0 ? b / l00 : 0.0;
        const double rem = c - l10 * l10;
        const double l11 = rem > 0.0 ? std::sqrt(rem) : 0.0;
        return {l00, l10, l11};
    }
};

}  // namespace editisp
