#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "editisp/errors.hpp"
#include "editisp/image.hpp"
#include "editisp/rawp.hpp"
#include "editisp/rng.hpp"

namespace editisp {

/// Dense CHW tensor. Channel-major so per-channel convolution loops stay
/// contiguous.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_)
        : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}

    double& at(int ch, int y, int x) {
        return v[(static_cast<std::size_t>(ch) * h + y) * w + x];
    }
    double at(int ch, int y, int x) const {
        return v[(static_cast<std::size_t>(ch) * h + y) * w + x];
    }
    std::size_t size() const { return v.size(); }
};

/// One 3x3 same-padding convolution. Weights indexed [oc][ic][ky][kx].
struct ConvParams {
    int in_c = 0, out_c = 0;
    std::vector<double> w;  // out_c * in_c * 9
    std::vector<double> b;  // out_c

    ConvParams() = default;
    ConvParams(int in, int out) : in_c(in), out_c(out), w(static_cast<std::size_t>(out) * in * 9, 0.0), b(out, 0.0) {}

    std::size_t param_count() const { return w.size() + b.size(); }
};

namespace detail {

inline void conv3x3_forward(const Tensor& in, const ConvParams& p, Tensor& out) {
    out = Tensor(p.out_c, in.h, in.w);
    const int H = in.h, W = in.w;
    for (int oc = 0; oc < p.out_c; ++oc) {
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) out.at(oc, y, x) = p.b[oc];
        for (int ic = 0; ic < p.in_c; ++ic) {
            const double* kw = &p.w[(static_cast<std::size_t>(oc) * p.in_c + ic) * 9];
            for (int y = 0; y < H; ++y) {
                const int y0 = std::max(0, y - 1), y1 = std::min(H - 1, y + 1);
                for (int x = 0; x < W; ++x) {
                    const int x0 = std::max(0, x - 1), x1 = std::min(W - 1, x + 1);
                    double acc = 0.0;
                    for (int yy = y0; yy <= y1; ++yy)
                        for (int xx = x0; xx <= x1; ++xx)
                            acc += kw[(yy - y + 1) * 3 + (xx - x + 1)] * in.at(ic, yy, xx);
                    out.at(oc, y, x) += acc;
                }
            }
        }
    }
}

/// Gradients for the same convolution. d_in may be null when the input is
/// training data rather than an upstream activation.
inline void conv3x3_backward(const Tensor& in, const ConvParams& p, const Tensor& d_out,
                             Tensor* d_in, ConvParams& d_p) {
    const int H = in.h, W = in.w;
    d_p = ConvParams(p.in_c, p.out_c);
    if (d_in) *d_in = Tensor(p.in_c, H, W);
    for (int oc = 0; oc < p.out_c; ++oc) {
        double db = 0.0;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) db += d_out.at(oc, y, x);
        d_p.b[oc] = db;
        for (int ic = 0; ic < p.in_c; ++ic) {
            const double* kw = &p.w[(static_cast<std::size_t>(oc) * p.in_c + ic) * 9];
            double* dkw = &d_p.w[(static_cast<std::size_t>(oc) * p.in_c + ic) * 9];
            for (int y = 0; y < H; ++y) {
                const int y0 = std::max(0, y - 1), y1 = std::min(H - 1, y + 1);
                for (int x = 0; x < W; ++x) {
                    const int x0 = std::max(0, x - 1), x1 = std::min(W - 1, x + 1);
                    const double g = d_out.at(oc, y, x);
                    for (int yy = y0; yy <= y1; ++yy)
                        for (int xx = x0; xx <= x1; ++xx) {
                            const int k = (yy - y + 1) * 3 + (xx - x + 1);
                            dkw[k] += g * in.at(ic, yy, xx);
                            if (d_in) d_in->at(ic, yy, xx) += g * kw[k];
                        }
                }
            }
        }
    }
}

inline double softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline void softplus_forward(Tensor& t) {
    for (auto& x : t.v) x = softplus(x);
}

inline void avgpool2_forward(const Tensor& in, Tensor& out) {
    if (in.h % 2 != 0 || in.w % 2 != 0)
        throw ArgumentError("avgpool2: odd spatial size");
    out = Tensor(in.c, in.h / 2, in.w / 2);
    for (int c = 0; c < in.c; ++c)
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x)
                out.at(c, y, x) = 0.25 * (in.at(c, 2 * y, 2 * x) + in.at(c, 2 * y, 2 * x + 1) +
                                          in.at(c, 2 * y + 1, 2 * x) +
                                          in.at(c, 2 * y + 1, 2 * x + 1));
}

inline void avgpool2_backward(const Tensor& d_out, Tensor& d_in) {
    d_in = Tensor(d_out.c, d_out.h * 2, d_out.w * 2);
    for (int c = 0; c < d_out.c; ++c)
        for (int y = 0; y < d_out.h; ++y)
            for (int x = 0; x < d_out.w; ++x) {
                const double g = 0.25 * d_out.at(c, y, x);
                d_in.at(c, 2 * y, 2 * x) = g;
                d_in.at(c, 2 * y, 2 * x + 1) = g;
                d_in.at(c, 2 * y + 1, 2 * x) = g;
                d_in.at(c, 2 * y + 1, 2 * x + 1) = g;
            }
}

inline void upsample2_nearest_forward(const Tensor& in, Tensor& out) {
    out = Tensor(in.c, in.h * 2, in.w * 2);
    for (int c = 0; c < in.c; ++c)
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x) out.at(c, y, x) = in.at(c, y / 2, x / 2);
}

inline void upsample2_nearest_backward(const Tensor& d_out, Tensor& d_in) {
    d_in = Tensor(d_out.c, d_out.h / 2, d_out.w / 2);
    for (int c = 0; c < d_out.c; ++c)
        for (int y = 0; y < d_out.h; ++y)
            for (int x = 0; x < d_out.w; ++x) d_in.at(c, y / 2, x / 2) += d_out.at(c, y, x);
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.h != b.h || a.w != b.w) throw ArgumentError("concat: spatial mismatch");
    Tensor out(a.c + b.c, a.h, a.w);
    std::memcpy(out.v.data(), a.v.data(), a.v.size() * sizeof(double));
    std::memcpy(out.v.data() + a.v.size(), b.v.data(), b.v.size() * sizeof(double));
    return out;
}

}  // namespace detail

enum class LossMode : std::uint8_t { RawOnly = 0, SrgbOnly = 1, Combined = 2 };

struct ModelConfig {
    int base_filters = 32;
    int depth = 3;
    int metadata_factor = 8;
    int patch_side = 304;
    int batch_size = 32;
    int epochs = 50;
    double learning_rate = 1e-3;
    double ft_learning_rate = 1e-4;
    int ft_iterations = 100;
    LossMode loss_mode = LossMode::Combined;
    double lambda = 2.0;
};

inline void validate_model_config(const ModelConfig& cfg) {
    if (cfg.base_filters < 1 || cfg.depth < 1 || cfg.metadata_factor < 1 ||
        cfg.patch_side < 1 || cfg.batch_size < 1 || cfg.epochs < 0 ||
        cfg.ft_iterations < 0)
        throw ArgumentError("ModelConfig: counts must be positive");
    if (!(cfg.learning_rate > 0.0) || !(cfg.ft_learning_rate > 0.0))
        throw ArgumentError("ModelConfig: learning rates must be positive");
    if (cfg.lambda < 0.0) throw ArgumentError("ModelConfig: lambda must be non-negative");
    if (cfg.patch_side % cfg.metadata_factor != 0)
        throw ArgumentError("ModelConfig: patch_side must divide by metadata_factor");
    if (cfg.patch_side % (1 << cfg.depth) != 0)
        throw ArgumentError("ModelConfig: patch_side must divide by 2^depth");
}

/// Activations recorded by the forward pass: input and pre-activation of
/// every convolution, in execution order.
struct UnetTape {
    bool valid = false;
    int h = 0, w = 0;
    std::vector<Tensor> conv_in;
    std::vector<Tensor> conv_pre;  // empty tensor where the layer is linear
};

/// Encoder-decoder over a 6-channel input (render + upsampled RAW
/// metadata): one softplus conv per level, average-pool down,
/// nearest-neighbor up, skip concatenations, linear 3-channel head.
class Unet {
public:
    Unet() = default;

    explicit Unet(const ModelConfig& cfg) : cfg_(cfg) {
        validate_model_config(cfg);
        const int d = cfg.depth, f = cfg.base_filters;
        for (int l = 0; l < d; ++l)
            enc_.emplace_back(l == 0 ? 6 : f << (l - 1), f << l);
        mid_ = ConvParams(f << (d - 1), f << (d - 1));
        for (int l = d - 1; l >= 0; --l) {
            const int skip_c = f << l;
            const int carry_c = l == d - 1 ? (f << (d - 1)) : dec_out_channels(l + 1);
            dec_.emplace_back(skip_c + carry_c, dec_out_channels(l));
        }
        head_ = ConvParams(f, 3);
    }

    static Unet random_init(const ModelConfig& cfg, Rng& rng) {
        Unet net(cfg);
        for (ConvParams* p : net.all_layers()) {
            const double scale = std::sqrt(2.0 / (9.0 * p->in_c));
            for (auto& x : p->w) x = rng.normal(0.0, scale);
        }
        return net;
    }

    const ModelConfig& config() const { return cfg_; }

    int dec_out_channels(int level) const {
        return level > 0 ? cfg_.base_filters << (level - 1) : cfg_.base_filters;
    }

    std::vector<ConvParams*> all_layers() {
        std::vector<ConvParams*> out;
        for (auto& p : enc_) out.push_back(&p);
        out.push_back(&mid_);
        for (auto& p : dec_) out.push_back(&p);
        out.push_back(&head_);
        return out;
    }

    std::vector<const ConvParams*> all_layers() const {
        std::vector<const ConvParams*> out;
        for (const auto& p : enc_) out.push_back(&p);
        out.push_back(&mid_);
        for (const auto& p : dec_) out.push_back(&p);
        out.push_back(&head_);
        return out;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const ConvParams* p : all_layers()) n += p->param_count();
        return n;
    }

    /// x_hat = f(render, metadata). Output is intentionally unclamped.
    RawImage forward(const SrgbImage& srgb, const RawImage& raw_meta_up,
                     UnetTape* tape = nullptr) const {
        if (srgb.height() != raw_meta_up.height() || srgb.width() != raw_meta_up.width())
            throw ArgumentError("Unet::forward: input spatial mismatch");
        const int H = srgb.height(), W = srgb.width();
        if (H % (1 << cfg_.depth) != 0 || W % (1 << cfg_.depth) != 0)
            throw ArgumentError("Unet::forward: size must divide by 2^depth");

        if (tape) {
            tape->valid = false;
            tape->h = H;
            tape->w = W;
            tape->conv_in.clear();
            tape->conv_pre.clear();
        }

        Tensor cur(6, H, W);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                for (int c = 0; c < 3; ++c) {
                    cur.at(c, y, x) = srgb.at(y, x, c);
                    cur.at(c + 3, y, x) = raw_meta_up.at(y, x, c);
                }

        auto run_conv = [&tape](const Tensor& in, const ConvParams& p, bool softplus) {
            Tensor out;
            detail::conv3x3_forward(in, p, out);
            if (tape) {
                tape->conv_in.push_back(in);
                tape->conv_pre.push_back(softplus ? out : Tensor());
            }
            if (softplus) detail::softplus_forward(out);
            return out;
        };

        std::vector<Tensor> skips;
        for (int l = 0; l < cfg_.depth; ++l) {
            cur = run_conv(cur, enc_[l], true);
            skips.push_back(cur);
            Tensor pooled;
            detail::avgpool2_forward(cur, pooled);
            cur = std::move(pooled);
        }
        cur = run_conv(cur, mid_, true);
        for (int i = 0; i < cfg_.depth; ++i) {
            const int level = cfg_.depth - 1 - i;
            Tensor up;
            detail::upsample2_nearest_forward(cur, up);
            cur = run_conv(detail::concat_channels(skips[level], up), dec_[i], true);
        }
        cur = run_conv(cur, head_, false);

        RawImage out(H, W);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                for (int c = 0; c < 3; ++c) out.at(y, x, c) = cur.at(c, y, x);
        if (tape) tape->valid = true;
        return out;
    }

    /// Reverse pass. Returns per-layer parameter gradients in all_layers()
    /// order; optionally the gradient w.r.t. the 6-channel input.
    std::vector<ConvParams> backward(const UnetTape& tape, const RawImage& grad_out,
                                     Tensor* grad_input = nullptr) const {
        if (!tape.valid) throw StateError("Unet::backward: stale tape");
        if (grad_out.height() != tape.h || grad_out.width() != tape.w)
            throw StateError("Unet::backward: gradient shape mismatch");
        const std::size_t n_conv = 2 * cfg_.depth + 2;
        if (tape.conv_in.size() != n_conv)
            throw StateError("Unet::backward: tape does not match architecture");

        std::vector<ConvParams> grads(n_conv);
        int ti = static_cast<int>(n_conv) - 1;

        Tensor d_cur(3, tape.h, tape.w);
        for (int y = 0; y < tape.h; ++y)
            for (int x = 0; x < tape.w; ++x)
                for (int c = 0; c < 3; ++c) d_cur.at(c, y, x) = grad_out.at(y, x, c);

        auto back_conv = [&](const ConvParams& p, Tensor* d_in) {
            const Tensor& pre = tape.conv_pre[ti];
            if (pre.c != 0)
                for (std::size_t i = 0; i < d_cur.v.size(); ++i)
                    d_cur.v[i] *= detail::sigmoid(pre.v[i]);
            detail::conv3x3_backward(tape.conv_in[ti], p, d_cur, d_in, grads[ti]);
            --ti;
        };

        // head (linear)
        {
            Tensor d_in;
            back_conv(head_, &d_in);
            d_cur = std::move(d_in);
        }
        // decoder, accumulating into the skip gradients
        std::vector<Tensor> d_skips(cfg_.depth);
        for (int i = cfg_.depth - 1; i >= 0; --i) {
            const int level = cfg_.depth - 1 - i;
            Tensor d_concat;
            back_conv(dec_[i], &d_concat);
            const int skip_c = cfg_.base_filters << level;
            Tensor d_skip(skip_c, d_concat.h, d_concat.w);
            Tensor d_up(d_concat.c - skip_c, d_concat.h, d_concat.w);
            std::memcpy(d_skip.v.data(), d_concat.v.data(), d_skip.v.size() * sizeof(double));
            std::memcpy(d_up.v.data(), d_concat.v.data() + d_skip.v.size(),
                        d_up.v.size() * sizeof(double));
            d_skips[level] = std::move(d_skip);
            detail::upsample2_nearest_backward(d_up, d_cur);
        }
        // bottleneck
        {
            Tensor d_in;
            back_conv(mid_, &d_in);
            d_cur = std::move(d_in);
        }
        // encoder: pool gradient plus the skip contribution
        for (int l = cfg_.depth - 1; l >= 0; --l) {
            Tensor d_act;
            detail::avgpool2_backward(d_cur, d_act);
            for (std::size_t i = 0; i < d_act.v.size(); ++i) d_act.v[i] += d_skips[l].v[i];
            d_cur = std::move(d_act);
            Tensor d_in;
            back_conv(enc_[l], l == 0 && !grad_input ? nullptr : &d_in);
            if (l > 0 || grad_input) d_cur = std::move(d_in);
        }
        if (grad_input) *grad_input = std::move(d_cur);
        return grads;
    }

    void save(const std::string& path) const;
    static Unet load(const std::string& path);

private:
    ModelConfig cfg_;
    std::vector<ConvParams> enc_;
    ConvParams mid_;
    std::vector<ConvParams> dec_;
    ConvParams head_;
};

/// Adam with bias correction; moments mirror the layer list.
struct AdamState {
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    std::vector<std::vector<double>> m_w, v_w, m_b, v_b;
    long step = 0;

    explicit AdamState(const Unet& net) {
        for (const ConvParams* p : net.all_layers()) {
            m_w.emplace_back(p->w.size(), 0.0);
            v_w.emplace_back(p->w.size(), 0.0);
            m_b.emplace_back(p->b.size(), 0.0);
            v_b.emplace_back(p->b.size(), 0.0);
        }
    }
};

inline void adam_step(Unet& net, const std::vector<ConvParams>& grads, AdamState& state,
                      double lr) {
    std::vector<ConvParams*> layers = net.all_layers();
    if (grads.size() != layers.size())
        throw ArgumentError("adam_step: gradient list does not match layer list");
    state.step += 1;
    const double c1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(state.step));
    for (std::size_t li = 0; li < layers.size(); ++li) {
        auto update = [&](std::vector<double>& param, const std::vector<double>& g,
                          std::vector<double>& m, std::vector<double>& v) {
            for (std::size_t i = 0; i < param.size(); ++i) {
                m[i] = AdamState::kBeta1 * m[i] + (1.0 - AdamState::kBeta1) * g[i];
                v[i] = AdamState::kBeta2 * v[i] + (1.0 - AdamState::kBeta2) * g[i] * g[i];
                const double mh = m[i] / c1;
                const double vh = v[i] / c2;
                param[i] -= lr * mh / (std::sqrt(vh) + AdamState::kEps);
            }
        };
        update(layers[li]->w, grads[li].w, state.m_w[li], state.v_w[li]);
        update(layers[li]->b, grads[li].b, state.m_b[li], state.v_b[li]);
    }
}

inline constexpr std::uint16_t kRnetVersion = 1;

inline void Unet::save(const std::string& path) const {
    std::string out = "RNET";
    detail::put_u16be(out, kRnetVersion);
    detail::put_u32be(out, static_cast<std::uint32_t>(cfg_.base_filters));
    detail::put_u32be(out, static_cast<std::uint32_t>(cfg_.depth));
    detail::put_u32be(out, static_cast<std::uint32_t>(cfg_.metadata_factor));
    detail::put_u32be(out, static_cast<std::uint32_t>(cfg_.patch_side));
    detail::put_u32be(out, static_cast<std::uint32_t>(cfg_.batch_size));
    detail::put_u32be(out, static_cast<std::uint32_t>(cfg_.epochs));
    detail::put_f64be(out, cfg_.learning_rate);
    detail::put_f64be(out, cfg_.ft_learning_rate);
    detail::put_u32be(out, static_cast<std::uint32_t>(cfg_.ft_iterations));
    out.push_back(static_cast<std::uint8_t>(cfg_.loss_mode));
    detail::put_f64be(out, cfg_.lambda);
    for (const ConvParams* p : all_layers()) {
        for (double x : p->w) detail::put_f64be(out, x);
        for (double x : p->b) detail::put_f64be(out, x);
    }
    detail::write_file(path, out);
}

inline Unet Unet::load(const std::string& path) {
    const std::string bytes = detail::read_file(path);
    detail::ByteReader r(bytes, "model checkpoint");
    if (bytes.size() < 4 || bytes.compare(0, 4, "RNET") != 0)
        throw FormatError("model checkpoint: bad magic");
    r.bytes(4);
    const std::uint16_t version = r.u16be();
    if (version != kRnetVersion)
        throw CorruptFileError("model checkpoint: unsupported version");
    ModelConfig cfg;
    cfg.base_filters = static_cast<int>(r.u32be());
    cfg.depth = static_cast<int>(r.u32be());
    cfg.metadata_factor = static_cast<int>(r.u32be());
    cfg.patch_side = static_cast<int>(r.u32be());
    cfg.batch_size = static_cast<int>(r.u32be());
    cfg.epochs = static_cast<int>(r.u32be());
    cfg.learning_rate = r.f64be();
    cfg.ft_learning_rate = r.f64be();
    cfg.ft_iterations = static_cast<int>(r.u32be());
    const std::uint8_t mode = r.u8();
    if (mode > 2) throw CorruptFileError("model checkpoint: bad loss mode");
    cfg.loss_mode = static_cast<LossMode>(mode);
    cfg.lambda = r.f64be();
    try {
        validate_model_config(cfg);
    } catch (const ArgumentError& e) {
        throw CorruptFileError(std::string("model checkpoint: ") + e.what());
    }
    Unet net(cfg);
    for (ConvParams* p : net.all_layers()) {
        for (auto& x : p->w) x = r.f64be();
        for (auto& x : p->b) x = r.f64be();
        for (double x : p->w)
            if (!std::isfinite(x)) throw CorruptFileError("model checkpoint: non-finite weight");
        for (double x : p->b)
            if (!std::isfinite(x)) throw CorruptFileError("model checkpoint: non-finite bias");
    }
    if (r.remaining() != 0) throw CorruptFileError("model checkpoint: trailing bytes");
    return net;
}

}  // namespace editisp
