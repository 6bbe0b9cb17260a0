#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "editisp/color.hpp"
#include "editisp/errors.hpp"
#include "editisp/image.hpp"
#include "editisp/mlp.hpp"
#include "editisp/vecmat.hpp"

namespace editisp {

/// One sampled (or preset) configuration of the tunable ISP.
struct EditParams {
    double epsilon = 0.0;                    // exposure, stops
    Vec2 omega{1.0, 1.0};                    // illuminant chromaticity [r/g, b/g]
    int rho = 1;                             // LUT index, 1-based
    std::vector<double> tone_poly = {0.0, 1.0};  // monomial coeffs c0..c_tau of S
};

/// S(u) = sum_i c_i u^i via Horner.
inline double tone_poly_eval(const std::vector<double>& c, double u) {
    double acc = 0.0;
    for (std::size_t i = c.size(); i-- > 0;) acc = acc * u + c[i];
    return acc;
}

inline double tone_poly_deriv(const std::vector<double>& c, double u) {
    double acc = 0.0;
    for (std::size_t i = c.size(); i-- > 1;) acc = acc * u + c[i] * static_cast<double>(i);
    return acc;
}

inline std::vector<double> identity_tone_poly() { return {0.0, 1.0}; }

/// Enforces the EditParams invariants: finite exposure, positive ω, LUT
/// index in range, and S a non-decreasing [0,1]->[0,1] map with S(0)=0,
/// S(1)=1 (checked on a 1024-point grid).
inline void validate_edit_params(const EditParams& phi, int k_luts) {
    if (!std::isfinite(phi.epsilon)) throw ArgumentError("EditParams: non-finite exposure");
    if (!(phi.omega.x > 1e-6) || !(phi.omega.y > 1e-6))
        throw ArgumentError("EditParams: omega components must be positive");
    if (phi.rho < 1 || phi.rho > k_luts)
        throw ArgumentError("EditParams: LUT index " + std::to_string(phi.rho) +
                            " outside 1.." + std::to_string(k_luts));
    if (phi.tone_poly.empty()) throw ArgumentError("EditParams: empty tone polynomial");
    const double s0 = tone_poly_eval(phi.tone_poly, 0.0);
    const double s1 = tone_poly_eval(phi.tone_poly, 1.0);
    if (std::abs(s0) > 1e-9 || std::abs(s1 - 1.0) > 1e-9)
        throw ArgumentError("EditParams: tone polynomial endpoints must be (0,1)");
    double prev = 0.0;
    for (int i = 1; i < 1024; ++i) {
        const double v = tone_poly_eval(phi.tone_poly, i / 1023.0);
        if (v < prev - 1e-12) throw ArgumentError("EditParams: tone polynomial not monotone");
        prev = v;
    }
}

/// Fixed reference illuminants the two calibration matrices belong to.
inline constexpr Vec2 kCstAnchorA{1.8, 0.45};   // warm / tungsten-like
inline constexpr Vec2 kCstAnchorB{0.65, 0.85};  // cool / daylight-like

/// Inverse-distance blend of the calibration pair in chromaticity space.
inline Mat3 cst_interpolate(const Vec2& omega, const ImageMeta& meta) {
    const double da = (omega - kCstAnchorA).norm();
    const double db = (omega - kCstAnchorB).norm();
    const double denom = da + db;
    if (denom < 1e-15) return meta.cst_a;
    const double alpha = std::clamp(da / denom, 0.0, 1.0);
    return meta.cst_a * (1.0 - alpha) + meta.cst_b * alpha;
}

/// Frozen per-pixel approximators: K color MLPs plus the tone MLP psi.
/// Checksums are pinned at construction so later mutation is detectable.
class IspBank {
public:
    IspBank() = default;

    IspBank(std::vector<Mlp> color, Mlp tone)
        : color_(std::move(color)), tone_(std::move(tone)) {
        for (const auto& m : color_) {
            if (m.in_arity() != 3 || m.out_arity() != 3)
                throw ArgumentError("IspBank: color MLP arity must be 3/3");
            color_sums_.push_back(m.checksum());
        }
        if (tone_.in_arity() != 1 || tone_.out_arity() != 1)
            throw ArgumentError("IspBank: tone MLP arity must be 1/1");
        tone_sum_ = tone_.checksum();
    }

    /// Exact-identity bank (single linear layers); neutral configs in tests.
    static IspBank neutral(int k = 1) {
        std::vector<Mlp> color;
        for (int i = 0; i < k; ++i) color.push_back(Mlp::exact_identity(3));
        return IspBank(std::move(color), Mlp::exact_identity(1));
    }

    int lut_count() const { return static_cast<int>(color_.size()); }

    const Mlp& color(int rho) const {
        if (color_.empty()) throw StateError("IspBank: no color MLPs loaded");
        if (rho < 1 || rho > lut_count())
            throw ArgumentError("IspBank: LUT index out of range");
        return color_[rho - 1];
    }

    const Mlp& tone() const {
        if (tone_.out_arity() == 0) throw StateError("IspBank: tone MLP not loaded");
        return tone_;
    }

    /// Frozen-weights guarantee: recompute checksums and compare.
    void assert_frozen() const {
        for (std::size_t i = 0; i < color_.size(); ++i)
            if (color_[i].checksum() != color_sums_[i])
                throw StateError("IspBank: color MLP " + std::to_string(i + 1) + " mutated");
        if (tone_.checksum() != tone_sum_) throw StateError("IspBank: tone MLP mutated");
    }

    std::uint64_t combined_checksum() const {
        std::uint64_t h = 0xCBF29CE484222325ULL;
        auto mix = [&h](std::uint64_t v) {
            for (int i = 0; i < 8; ++i) {
                h ^= (v >> (8 * i)) & 0xFF;
                h *= 0x100000001B3ULL;
            }
        };
        for (auto s : color_sums_) mix(s);
        mix(tone_sum_);
        return h;
    }

private:
    std::vector<Mlp> color_;
    Mlp tone_;
    std::vector<std::uint64_t> color_sums_;
    std::uint64_t tone_sum_ = 0;
};

inline constexpr double kGammaClampDelta = 1e-6;
inline constexpr double kGamma = 1.0 / 2.2;

/// Intermediates cached by pipeline_forward for the exact backward pass.
/// Valid only for the (input, phi, meta, bank) combination that filled it.
struct RenderTape {
    bool valid = false;
    int height = 0, width = 0;
    double exp_scale = 1.0;            // 2^epsilon
    Mat3 M;                            // C_omega * W_omega
    int rho = 1;
    std::vector<double> tone_poly;
    std::vector<std::uint8_t> mask2;   // p2 within [0,1] (MLP input clamp inactive)
    MlpActivations color_acts;         // batch n of 3
    std::vector<std::uint8_t> mask3;   // p3 within [0,1]
    MlpActivations tone_acts;          // batch 3n of 1
    std::vector<double> u;             // psi outputs, 3n
    std::vector<double> w_pre;         // T*v before the gamma clamp, 3n
};

inline RawImage exposure_forward(const RawImage& p0, double epsilon) {
    if (!std::isfinite(epsilon)) throw ArgumentError("exposure_forward: non-finite epsilon");
    RawImage out = p0;
    const double s = std::exp2(epsilon);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= s;
    return out;
}

inline RawImage whitebalance_forward(const RawImage& p1, const Vec2& omega,
                                     const ImageMeta& meta) {
    if (!(omega.x > 1e-6) || !(omega.y > 1e-6))
        throw ArgumentError("whitebalance_forward: degenerate omega");
    const Mat3 C = cst_interpolate(omega, meta);
    const Mat3 M = C * Mat3::diag(1.0 / omega.x, 1.0, 1.0 / omega.y);
    RawImage out(p1.height(), p1.width());
    for (int y = 0; y < p1.height(); ++y)
        for (int x = 0; x < p1.width(); ++x) out.set_pixel(y, x, M * p1.pixel(y, x));
    return out;
}

inline RawImage color_forward(const RawImage& p2, int rho, const IspBank& bank) {
    const Mlp& mlp = bank.color(rho);
    const std::size_t n = p2.pixel_count();
    std::vector<double> in(n * 3);
    for (std::size_t i = 0; i < n * 3; ++i) in[i] = std::clamp(p2.data()[i], 0.0, 1.0);
    RawImage out(p2.height(), p2.width());
    mlp.forward(in.data(), n, out.data());
    return out;
}

inline SrgbImage tone_forward(const RawImage& p3, const std::vector<double>& tone_poly,
                              const IspBank& bank, const Mat3& T = color::xyz_to_srgb()) {
    const std::size_t n3 = p3.size();
    std::vector<double> q(n3), u(n3);
    for (std::size_t i = 0; i < n3; ++i) q[i] = std::clamp(p3.data()[i], 0.0, 1.0);
    bank.tone().forward(q.data(), n3, u.data());
    SrgbImage out(p3.height(), p3.width());
    for (std::size_t p = 0; p < n3 / 3; ++p) {
        Vec3 v;
        for (int c = 0; c < 3; ++c) v[c] = tone_poly_eval(tone_poly, u[p * 3 + c]);
        const Vec3 w = T * v;
        for (int c = 0; c < 3; ++c)
            out.data()[p * 3 + c] =
                std::pow(std::clamp(w[c], kGammaClampDelta, 1.0), kGamma);
    }
    return out;
}

/// Full render z = t(c(w(e(x)))). When tape is non-null every intermediate
/// needed by pipeline_backward is recorded.
inline SrgbImage pipeline_forward(const RawImage& x, const EditParams& phi,
                                  const ImageMeta& meta, const IspBank& bank,
                                  RenderTape* tape = nullptr) {
    validate_edit_params(phi, bank.lut_count());
    const std::size_t n = x.pixel_count();
    const std::size_t n3 = n * 3;
    const double s = std::exp2(phi.epsilon);
    const Mat3 C = cst_interpolate(phi.omega, meta);
    const Mat3 M = C * Mat3::diag(1.0 / phi.omega.x, 1.0, 1.0 / phi.omega.y);

    if (tape) {
        tape->valid = false;
        tape->height = x.height();
        tape->width = x.width();
        tape->exp_scale = s;
        tape->M = M;
        tape->rho = phi.rho;
        tape->tone_poly = phi.tone_poly;
        tape->mask2.resize(n3);
        tape->mask3.resize(n3);
        tape->u.resize(n3);
        tape->w_pre.resize(n3);
    }

    // exposure + white balance + MLP input clamp, fused per pixel
    std::vector<double> q2(n3);
    for (std::size_t p = 0; p < n; ++p) {
        const Vec3 px{x.data()[p * 3] * s, x.data()[p * 3 + 1] * s, x.data()[p * 3 + 2] * s};
        const Vec3 p2 = M * px;
        for (int c = 0; c < 3; ++c) {
            const bool inside = p2[c] >= 0.0 && p2[c] <= 1.0;
            if (tape) tape->mask2[p * 3 + c] = inside ? 1 : 0;
            q2[p * 3 + c] = inside ? p2[c] : (p2[c] < 0.0 ? 0.0 : 1.0);
        }
    }

    // color MLP
    std::vector<double> p3(n3);
    bank.color(phi.rho).forward(q2.data(), n, p3.data(), tape ? &tape->color_acts : nullptr);

    // tone: clamp, psi, S, T, gamma clamp
    std::vector<double> q3(n3);
    for (std::size_t i = 0; i < n3; ++i) {
        const bool inside = p3[i] >= 0.0 && p3[i] <= 1.0;
        if (tape) tape->mask3[i] = inside ? 1 : 0;
        q3[i] = inside ? p3[i] : (p3[i] < 0.0 ? 0.0 : 1.0);
    }
    std::vector<double> u(n3);
    bank.tone().forward(q3.data(), n3, u.data(), tape ? &tape->tone_acts : nullptr);
    if (tape) tape->u = u;

    const Mat3& T = color::xyz_to_srgb();
    SrgbImage z(x.height(), x.width());
    for (std::size_t p = 0; p < n; ++p) {
        Vec3 v;
        for (int c = 0; c < 3; ++c) v[c] = tone_poly_eval(phi.tone_poly, u[p * 3 + c]);
        const Vec3 w = T * v;
        for (int c = 0; c < 3; ++c) {
            if (tape) tape->w_pre[p * 3 + c] = w[c];
            z.data()[p * 3 + c] =
                std::pow(std::clamp(w[c], kGammaClampDelta, 1.0), kGamma);
        }
    }
    if (tape) tape->valid = true;
    return z;
}

inline SrgbImage render(const RawImage& x, const EditParams& phi, const ImageMeta& meta,
                        const IspBank& bank) {
    return pipeline_forward(x, phi, meta, bank, nullptr);
}

/// dL/dx from dL/dz. Clamp stages use the zero-outside subgradient: pixels
/// clipped by the gamma clamp or by an MLP input clamp pass no gradient.
inline RawImage pipeline_backward(const RenderTape& tape, const SrgbImage& grad_z,
                                  const IspBank& bank) {
    if (!tape.valid) throw StateError("pipeline_backward: tape not filled by a forward pass");
    if (grad_z.height() != tape.height || grad_z.width() != tape.width)
        throw StateError("pipeline_backward: gradient shape does not match tape");
    const std::size_t n = grad_z.pixel_count();
    const std::size_t n3 = n * 3;

    // gamma then T
    const Mat3 Tt = color::xyz_to_srgb().transposed();
    std::vector<double> du(n3);
    for (std::size_t p = 0; p < n; ++p) {
        Vec3 dw;
        for (int c = 0; c < 3; ++c) {
            const double w = tape.w_pre[p * 3 + c];
            const bool open = w > kGammaClampDelta && w < 1.0;
            dw[c] = open ? grad_z.data()[p * 3 + c] * kGamma * std::pow(w, kGamma - 1.0) : 0.0;
        }
        const Vec3 dv = Tt * dw;
        for (int c = 0; c < 3; ++c)
            du[p * 3 + c] = dv[c] * tone_poly_deriv(tape.tone_poly, tape.u[p * 3 + c]);
    }

    // psi backprop (1-D batch of 3n), then the p3 clamp mask
    std::vector<double> dq3(n3);
    bank.tone().backward_input(tape.tone_acts, du.data(), n3, dq3.data());
    for (std::size_t i = 0; i < n3; ++i)
        if (!tape.mask3[i]) dq3[i] = 0.0;

    // color MLP backprop, then the p2 clamp mask
    std::vector<double> dq2(n3);
    bank.color(tape.rho).backward_input(tape.color_acts, dq3.data(), n, dq2.data());
    for (std::size_t i = 0; i < n3; ++i)
        if (!tape.mask2[i]) dq2[i] = 0.0;

    // white balance (M^T) and exposure (2^eps)
    const Mat3 Mt = tape.M.transposed();
    RawImage dx(tape.height, tape.width);
    for (std::size_t p = 0; p < n; ++p) {
        const Vec3 g = Mt * Vec3{dq2[p * 3], dq2[p * 3 + 1], dq2[p * 3 + 2]};
        for (int c = 0; c < 3; ++c) dx.data()[p * 3 + c] = g[c] * tape.exp_scale;
    }
    return dx;
}

}  // namespace editisp
