#pragma once

#include <cmath>
#include <cstddef>

#include "editisp/errors.hpp"
#include "editisp/image.hpp"
#include "editisp/isp.hpp"

namespace editisp {

/// Scalar objective plus its gradient with respect to the reconstruction.
struct LossValue {
    double value = 0.0;
    RawImage grad;
};

/// Mean squared error in RAW space. Mean reduction over all samples keeps
/// the loss scale independent of patch size.
inline LossValue l_raw(const RawImage& x, const RawImage& xhat) {
    if (x.height() != xhat.height() || x.width() != xhat.width())
        throw ArgumentError("l_raw: shape mismatch");
    const std::size_t n = x.size();
    LossValue out;
    out.grad = RawImage(x.height(), x.width());
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = xhat.data()[i] - x.data()[i];
        acc += d * d;
        out.grad.data()[i] = 2.0 * d / static_cast<double>(n);
    }
    out.value = acc / static_cast<double>(n);
    return out;
}

/// Mean squared error between renders of x and xhat under one shared edit.
/// Only xhat's render is taped; x is a constant target.
inline LossValue l_srgb(const RawImage& x, const RawImage& xhat, const EditParams& phi,
                        const ImageMeta& meta, const IspBank& bank) {
    if (x.height() != xhat.height() || x.width() != xhat.width())
        throw ArgumentError("l_srgb: shape mismatch");
    const SrgbImage z = render(x, phi, meta, bank);
    RenderTape tape;
    const SrgbImage zhat = pipeline_forward(xhat, phi, meta, bank, &tape);
    const std::size_t n = z.size();
    SrgbImage gz(x.height(), x.width());
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = zhat.data()[i] - z.data()[i];
        acc += d * d;
        gz.data()[i] = 2.0 * d / static_cast<double>(n);
    }
    LossValue out;
    out.value = acc / static_cast<double>(n);
    out.grad = pipeline_backward(tape, gz, bank);
    return out;
}

/// Combined objective: optional RAW term + optional extra term + weighted
/// render term. Gradients add linearly.
inline LossValue l_total(const RawImage& x, const RawImage& xhat, const EditParams& phi,
                         const ImageMeta& meta, const IspBank& bank, double lambda,
                         bool include_raw = true, const LossValue* misc = nullptr) {
    if (lambda < 0.0) throw ArgumentError("l_total: lambda must be non-negative");
    LossValue out;
    out.grad = RawImage(xhat.height(), xhat.width());
    if (include_raw) {
        LossValue raw = l_raw(x, xhat);
        out.value += raw.value;
        for (std::size_t i = 0; i < out.grad.size(); ++i)
            out.grad.data()[i] += raw.grad.data()[i];
    }
    if (misc) {
        if (misc->grad.height() != xhat.height() || misc->grad.width() != xhat.width())
            throw ArgumentError("l_total: misc gradient shape mismatch");
        out.value += misc->value;
        for (std::size_t i = 0; i < out.grad.size(); ++i)
            out.grad.data()[i] += misc->grad.data()[i];
    }
    if (lambda > 0.0) {
        LossValue srgb = l_srgb(x, xhat, phi, meta, bank);
        out.value += lambda * srgb.value;
        for (std::size_t i = 0; i < out.grad.size(); ++i)
            out.grad.data()[i] += lambda * srgb.grad.data()[i];
    }
    return out;
}

/// Fine-tuning loss against a stored low-resolution RAW: renders are
/// compared at the metadata resolution and the gradient flows back through
/// the box-average downsample. Pass z_d_cache when g(x_d) was rendered once
/// up front (the target edit never changes during fine-tuning).
inline LossValue l_srgb_ft_downsampled(const RawImage& x_d, const RawImage& xhat, int factor,
                                       const EditParams& phi, const ImageMeta& meta,
                                       const IspBank& bank,
                                       const SrgbImage* z_d_cache = nullptr) {
    if (factor <= 0) throw ArgumentError("l_srgb_ft_downsampled: factor must be positive");
    if (xhat.height() != x_d.height() * factor || xhat.width() != x_d.width() * factor)
        throw ArgumentError("l_srgb_ft_downsampled: factor does not match shapes");
    if (z_d_cache &&
        (z_d_cache->height() != x_d.height() || z_d_cache->width() != x_d.width()))
        throw ArgumentError("l_srgb_ft_downsampled: cached render shape mismatch");

    const SrgbImage z_d = z_d_cache ? *z_d_cache : render(x_d, phi, meta, bank);
    const RawImage xhat_d = downsample(xhat, factor);
    RenderTape tape;
    const SrgbImage zhat_d = pipeline_forward(xhat_d, phi, meta, bank, &tape);

    const std::size_t n = z_d.size();
    SrgbImage gz(x_d.height(), x_d.width());
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = zhat_d.data()[i] - z_d.data()[i];
        acc += d * d;
        gz.data()[i] = 2.0 * d / static_cast<double>(n);
    }
    LossValue out;
    out.value = acc / static_cast<double>(n);
    const RawImage g_small = pipeline_backward(tape, gz, bank);
    out.grad = downsample_adjoint(g_small, factor, xhat.height(), xhat.width());
    return out;
}

/// Masked fine-tuning objective: RAW and render terms averaged over the
/// masked pixels only; unmasked pixels contribute nothing to either term.
inline LossValue l_ft_masked(const RawImage& x, const RawImage& xhat, const SampleMask& mask,
                             const EditParams& phi, const ImageMeta& meta, const IspBank& bank,
                             double lambda) {
    if (x.height() != xhat.height() || x.width() != xhat.width())
        throw ArgumentError("l_ft_masked: shape mismatch");
    if (mask.height() != x.height() || mask.width() != x.width())
        throw ArgumentError("l_ft_masked: mask shape mismatch");
    const std::size_t kept = mask.count();
    if (kept == 0) throw ArgumentError("l_ft_masked: empty mask has no defined mean");
    const double denom = static_cast<double>(kept) * 3.0;

    LossValue out;
    out.grad = RawImage(x.height(), x.width());
    double raw_acc = 0.0;
    for (int y = 0; y < x.height(); ++y)
        for (int xx = 0; xx < x.width(); ++xx) {
            if (!mask.at(y, xx)) continue;
            for (int c = 0; c < 3; ++c) {
                const double d = xhat.at(y, xx, c) - x.at(y, xx, c);
                raw_acc += d * d;
                out.grad.data()[(static_cast<std::size_t>(y) * x.width() + xx) * 3 + c] =
                    2.0 * d / denom;
            }
        }
    out.value = raw_acc / denom;

    if (lambda > 0.0) {
        const SrgbImage z = render(x, phi, meta, bank);
        RenderTape tape;
        const SrgbImage zhat = pipeline_forward(xhat, phi, meta, bank, &tape);
        SrgbImage gz(x.height(), x.width());
        double srgb_acc = 0.0;
        for (int y = 0; y < x.height(); ++y)
            for (int xx = 0; xx < x.width(); ++xx) {
                if (!mask.at(y, xx)) continue;
                for (int c = 0; c < 3; ++c) {
                    const std::size_t i =
                        (static_cast<std::size_t>(y) * x.width() + xx) * 3 + c;
                    const double d = zhat.data()[i] - z.data()[i];
                    srgb_acc += d * d;
                    gz.data()[i] = 2.0 * d / denom;
                }
            }
        out.value += lambda * srgb_acc / denom;
        const RawImage g = pipeline_backward(tape, gz, bank);
        for (std::size_t i = 0; i < out.grad.size(); ++i)
            out.grad.data()[i] += lambda * g.data()[i];
    }
    return out;
}

}  // namespace editisp
