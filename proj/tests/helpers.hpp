#pragma once

// Shared fixtures for pipeline-level tests: tiny random MLP banks, valid
// random tone polynomials, and a meta whose CSTs make camera space coincide
// with linear sRGB (the fixed output matrix then cancels them).

#include <vector>

#include "editisp/color.hpp"
#include "editisp/image.hpp"
#include "editisp/isp.hpp"
#include "editisp/rng.hpp"

namespace editisp::testutil {

inline RawImage random_raw(int h, int w, double lo, double hi, Rng& rng) {
    RawImage img(h, w);
    for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = rng.uniform(lo, hi);
    return img;
}

inline std::vector<double> random_tone_poly(Rng& rng) {
    const int tau = rng.uniform_int(1, 5);
    std::vector<double> c(tau + 1, 0.0);
    double total = 0.0;
    for (int i = 0; i < tau; ++i) {
        c[i + 1] = rng.uniform01() / (i + 1);
        total += c[i + 1];
    }
    if (total <= 0.0) return {0.0, 1.0};
    for (auto& v : c) v /= total;
    return c;
}

inline IspBank random_bank(int k, Rng& rng) {
    std::vector<Mlp> color;
    for (int i = 0; i < k; ++i) color.emplace_back(3, std::vector<int>{8, 8}, 3, rng);
    Mlp tone(1, std::vector<int>{8}, 1, rng);
    return IspBank(std::move(color), std::move(tone));
}

inline ImageMeta srgb_native_meta() {
    ImageMeta meta;
    meta.cst_a = color::srgb_to_xyz();
    meta.cst_b = color::srgb_to_xyz();
    return meta;
}

/// Pixels of x whose intermediate stage values sit within `margin` of any
/// clamp boundary; finite-difference checks skip them.
inline std::vector<bool> near_clamp_mask(const RawImage& x, const EditParams& phi,
                                         const ImageMeta& meta, const IspBank& bank,
                                         double margin = 1e-3) {
    RawImage p2 = whitebalance_forward(exposure_forward(x, phi.epsilon), phi.omega, meta);
    RawImage p3 = color_forward(p2, phi.rho, bank);
    RenderTape tape;
    pipeline_forward(x, phi, meta, bank, &tape);
    std::vector<bool> skip(x.pixel_count(), false);
    for (std::size_t p = 0; p < x.pixel_count(); ++p)
        for (int c = 0; c < 3; ++c) {
            const double a = p2.data()[p * 3 + c];
            const double b = p3.data()[p * 3 + c];
            const double w = tape.w_pre[p * 3 + c];
            if (std::abs(a) < margin || std::abs(a - 1.0) < margin || std::abs(b) < margin ||
                std::abs(b - 1.0) < margin || std::abs(w - 1e-6) < margin ||
                std::abs(w - 1.0) < margin)
                skip[p] = true;
        }
    return skip;
}

}  // namespace editisp::testutil
