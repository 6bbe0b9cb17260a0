#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "editisp/errors.hpp"
#include "editisp/rawp.hpp"
#include "editisp/rng.hpp"

namespace editisp {

enum class Activation : std::uint8_t { Linear = 0, Tanh = 1 };

struct MlpLayer {
    int width = 0;               // output features
    std::vector<double> w;       // row-major width x prev_width
    std::vector<double> b;       // width
    Activation act = Activation::Linear;
};

/// Per-layer post-activation values for a batch; consumed by the backward
/// passes. Valid only for the forward call that filled it.
struct MlpActivations {
    std::size_t n = 0;
    std::vector<std::vector<double>> post;  // layer -> n x width
};

/// Fully connected network, double precision. Weights are row-major so a
/// layer's output j is a contiguous dot product over the previous layer.
class Mlp {
public:
    Mlp() = default;

    Mlp(int in_arity, const std::vector<int>& hidden, int out_arity, Rng& rng)
        : in_(in_arity) {
        if (in_arity < 1 || out_arity < 1) throw ArgumentError("Mlp: bad arity");
        int prev = in_arity;
        for (int h : hidden) {
            layers_.push_back(init_layer(prev, h, Activation::Tanh, rng));
            prev = h;
        }
        layers_.push_back(init_layer(prev, out_arity, Activation::Linear, rng));
        // Fold the affine map 2x-1 into the first layer so tanh units start
        // centered over the unit cube; the network still takes [0,1] inputs.
        if (!hidden.empty()) {
            auto& l0 = layers_[0];
            for (int j = 0; j < l0.width; ++j) {
                double s = 0.0;
                for (int k = 0; k < in_; ++k) s += l0.w[static_cast<std::size_t>(j) * in_ + k];
                l0.b[j] = -s;
                for (int k = 0; k < in_; ++k) l0.w[static_cast<std::size_t>(j) * in_ + k] *= 2.0;
            }
        }
    }

    int in_arity() const { return in_; }
    int out_arity() const { return layers_.empty() ? 0 : layers_.back().width; }
    const std::vector<MlpLayer>& layers() const { return layers_; }
    std::vector<MlpLayer>& layers() { return layers_; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.w.size() + l.b.size();
        return n;
    }

    /// Batched forward. in is n x in_arity row-major; out n x out_arity.
    /// acts, when non-null, receives every layer's post-activations.
    void forward(const double* in, std::size_t n, double* out, MlpActivations* acts = nullptr) const {
        if (layers_.empty()) throw StateError("Mlp: no layers");
        if (acts) {
            acts->n = n;
            acts->post.resize(layers_.size());
        }
        std::vector<double> scratch_a, scratch_b;
        const double* cur = in;
        int prev = in_;
        for (std::size_t li = 0; li < layers_.size(); ++li) {
            const MlpLayer& l = layers_[li];
            std::vector<double>& dst =
                acts ? acts->post[li] : (li % 2 ? scratch_b : scratch_a);
            dst.resize(n * l.width);
            for (std::size_t i = 0; i < n; ++i) {
                const double* x = cur + i * prev;
                double* y = dst.data() + i * l.width;
                for (int j = 0; j < l.width; ++j) {
                    const double* wr = l.w.data() + static_cast<std::size_t>(j) * prev;
                    double s = l.b[j];
                    for (int k = 0; k < prev; ++k) s += wr[k] * x[k];
                    y[j] = l.act == Activation::Tanh ? std::tanh(s) : s;
                }
            }
            cur = dst.data();
            prev = l.width;
        }
        std::memcpy(out, cur, n * layers_.back().width * sizeof(double));
    }

    void eval(const double* in, double* out) const { forward(in, 1, out); }

    /// dL/dinput given dL/doutput, reusing the recorded activations.
    void backward_input(const MlpActivations& acts, const double* dout, std::size_t n,
                        double* din) const {
        if (acts.post.size() != layers_.size() || acts.n != n)
            throw StateError("Mlp: activations do not match this network/batch");
        const int L = static_cast<int>(layers_.size());
        std::vector<double> delta(dout, dout + n * layers_.back().width);
        for (int li = L - 1; li >= 0; --li) {
            const MlpLayer& l = layers_[li];
            const int prev = li == 0 ? in_ : layers_[li - 1].width;
            if (l.act == Activation::Tanh) {
                const auto& a = acts.post[li];
                for (std::size_t i = 0; i < n * static_cast<std::size_t>(l.width); ++i)
                    delta[i] *= 1.0 - a[i] * a[i];
            }
            std::vector<double> dprev(n * prev, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double* d = delta.data() + i * l.width;
                double* dp = dprev.data() + i * prev;
                for (int j = 0; j < l.width; ++j) {
                    const double* wr = l.w.data() + static_cast<std::size_t>(j) * prev;
                    const double dj = d[j];
                    for (int k = 0; k < prev; ++k) dp[k] += wr[k] * dj;
                }
            }
            delta = std::move(dprev);
        }
        std::memcpy(din, delta.data(), n * in_ * sizeof(double));
    }

    /// Parameter gradients (and optionally input gradients) for fitting.
    /// grads mirrors the layer structure: per layer dW then db appended.
    void backward_params(const double* in, const MlpActivations& acts, const double* dout,
                         std::size_t n, std::vector<std::vector<double>>& dw,
                         std::vector<std::vector<double>>& db) const {
        if (acts.post.size() != layers_.size() || acts.n != n)
            throw StateError("Mlp: activations do not match this network/batch");
        const int L = static_cast<int>(layers_.size());
        dw.assign(L, {});
        db.assign(L, {});
        std::vector<double> delta(dout, dout + n * layers_.back().width);
        for (int li = L - 1; li >= 0; --li) {
            const MlpLayer& l = layers_[li];
            const int prev = li == 0 ? in_ : layers_[li - 1].width;
            if (l.act == Activation::Tanh) {
                const auto& a = acts.post[li];
                for (std::size_t i = 0; i < n * static_cast<std::size_t>(l.width); ++i)
                    delta[i] *= 1.0 - a[i] * a[i];
            }
            dw[li].assign(l.w.size(), 0.0);
            db[li].assign(l.b.size(), 0.0);
            const double* prev_act = li == 0 ? in : acts.post[li - 1].data();
            for (std::size_t i = 0; i < n; ++i) {
                const double* d = delta.data() + i * l.width;
                const double* pa = prev_act + i * prev;
                for (int j = 0; j < l.width; ++j) {
                    const double dj = d[j];
                    db[li][j] += dj;
                    double* gw = dw[li].data() + static_cast<std::size_t>(j) * prev;
                    for (int k = 0; k < prev; ++k) gw[k] += dj * pa[k];
                }
            }
            if (li > 0) {
                std::vector<double> dprev(n * prev, 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                    const double* d = delta.data() + i * l.width;
                    double* dp = dprev.data() + i * prev;
                    for (int j = 0; j < l.width; ++j) {
                        const double* wr = l.w.data() + static_cast<std::size_t>(j) * prev;
                        const double dj = d[j];
                        for (int k = 0; k < prev; ++k) dp[k] += wr[k] * dj;
                    }
                }
                delta = std::move(dprev);
            }
        }
    }

    std::string serialize() const {
        std::string out;
        out += "MLPW";
        detail::put_u16be(out, kVersion);
        detail::put_u8(out, static_cast<std::uint8_t>(in_));
        detail::put_u8(out, static_cast<std::uint8_t>(out_arity()));
        detail::put_u8(out, static_cast<std::uint8_t>(layers_.size()));
        for (const auto& l : layers_) {
            detail::put_u32be(out, static_cast<std::uint32_t>(l.width));
            for (double v : l.w) detail::put_f64be(out, v);
            for (double v : l.b) detail::put_f64be(out, v);
            detail::put_u8(out, static_cast<std::uint8_t>(l.act));
        }
        return out;
    }

    static Mlp deserialize(const std::string& buf, const std::string& what) {
        detail::ByteReader r(buf, what);
        if (r.bytes(4) != "MLPW") throw FormatError(what + ": bad magic");
        const auto version = r.u16be();
        if (version != kVersion)
            throw FormatError(what + ": unsupported version " + std::to_string(version));
        Mlp mlp;
        mlp.in_ = r.u8();
        const int out_arity = r.u8();
        const int nlayers = r.u8();
        if (mlp.in_ < 1 || out_arity < 1 || nlayers < 1)
            throw CorruptFileError(what + ": degenerate header");
        int prev = mlp.in_;
        for (int li = 0; li < nlayers; ++li) {
            MlpLayer l;
            l.width = static_cast<int>(r.u32be());
            if (l.width < 1 || l.width > 1 << 20)
                throw CorruptFileError(what + ": bad layer width");
            l.w.resize(static_cast<std::size_t>(l.width) * prev);
            for (double& v : l.w) v = r.f64be();
            l.b.resize(l.width);
            for (double& v : l.b) v = r.f64be();
            const auto tag = r.u8();
            if (tag > 1) throw CorruptFileError(what + ": unknown activation tag");
            l.act = static_cast<Activation>(tag);
            for (double v : l.w)
                if (!std::isfinite(v)) throw CorruptFileError(what + ": non-finite weight");
            mlp.layers_.push_back(std::move(l));
            prev = mlp.layers_.back().width;
        }
        if (mlp.layers_.back().width != out_arity)
            throw CorruptFileError(what + ": output arity mismatch");
        if (r.remaining() != 0) throw CorruptFileError(what + ": trailing bytes");
        return mlp;
    }

    void save(const std::string& path) const { detail::write_file(path, serialize()); }

    static Mlp load(const std::string& path) {
        return deserialize(detail::read_file(path), path);
    }

    /// FNV-1a over the serialized bytes; used to assert frozen weights.
    std::uint64_t checksum() const {
        const std::string bytes = serialize();
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (unsigned char c : bytes) {
            h ^= c;
            h *= 0x100000001B3ULL;
        }
        return h;
    }

    /// Exact identity map as a single linear layer (for tests/neutral configs).
    static Mlp exact_identity(int arity) {
        Mlp mlp;
        mlp.in_ = arity;
        MlpLayer l;
        l.width = arity;
        l.w.assign(static_cast<std::size_t>(arity) * arity, 0.0);
        for (int i = 0; i < arity; ++i) l.w[static_cast<std::size_t>(i) * arity + i] = 1.0;
        l.b.assign(arity, 0.0);
        l.act = Activation::Linear;
        mlp.layers_.push_back(std::move(l));
        return mlp;
    }

private:
    static constexpr std::uint16_t kVersion = 1;

    static MlpLayer init_layer(int prev, int width, Activation act, Rng& rng) {
        MlpLayer l;
        l.width = width;
        l.act = act;
        const double scale = std::sqrt(2.0 / (prev + width));
        l.w.resize(static_cast<std::size_t>(width) * prev);
        for (double& v : l.w) v = rng.normal(0.0, scale);
        l.b.assign(width, 0.0);
        return l;
    }

    int in_ = 0;
    std::vector<MlpLayer> layers_;
};

}  // namespace editisp
