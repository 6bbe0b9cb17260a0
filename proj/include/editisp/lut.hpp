#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "editisp/color.hpp"
#include "editisp/errors.hpp"
#include "editisp/rng.hpp"
#include "editisp/vecmat.hpp"

namespace editisp {

/// Uniform 3-D lattice over the unit cube, node index ((ri*L + gi)*L + bi).
class Lut3D {
public:
    explicit Lut3D(int lattice = 17) : L_(lattice) {
        if (lattice < 2) throw ArgumentError("Lut3D: lattice must be >= 2");
        table_.assign(static_cast<std::size_t>(L_) * L_ * L_, Vec3{});
    }

    int lattice() const { return L_; }

    Vec3& node(int ri, int gi, int bi) { return table_[idx(ri, gi, bi)]; }
    const Vec3& node(int ri, int gi, int bi) const { return table_[idx(ri, gi, bi)]; }

    static Lut3D identity(int lattice = 17) {
        Lut3D lut(lattice);
        const double step = 1.0 / (lattice - 1);
        for (int r = 0; r < lattice; ++r)
            for (int g = 0; g < lattice; ++g)
                for (int b = 0; b < lattice; ++b)
                    lut.node(r, g, b) = {r * step, g * step, b * step};
        return lut;
    }

    template <typename Fn>
    static Lut3D from_function(Fn&& fn, int lattice = 17) {
        Lut3D lut(lattice);
        const double step = 1.0 / (lattice - 1);
        for (int r = 0; r < lattice; ++r)
            for (int g = 0; g < lattice; ++g)
                for (int b = 0; b < lattice; ++b) {
                    const Vec3 out = fn(Vec3{r * step, g * step, b * step});
                    if (!std::isfinite(out.r) || !std::isfinite(out.g) || !std::isfinite(out.b) ||
                        out.r < 0.0 || out.r > 1.0 || out.g < 0.0 || out.g > 1.0 ||
                        out.b < 0.0 || out.b > 1.0)
                        throw NumericError("Lut3D: node value outside [0,1]");
                    lut.node(r, g, b) = out;
                }
        return lut;
    }

    /// Trilinear interpolation; queries clamp to the unit cube.
    Vec3 apply(const Vec3& rgb) const {
        double f[3];
        int i0[3], i1[3];
        const double in[3] = {rgb.r, rgb.g, rgb.b};
        for (int a = 0; a < 3; ++a) {
            const double u = std::clamp(in[a], 0.0, 1.0) * (L_ - 1);
            int i = static_cast<int>(u);
            if (i > L_ - 2) i = L_ - 2;
            i0[a] = i;
            i1[a] = i + 1;
            f[a] = u - i;
        }
        Vec3 out{};
        for (int dr = 0; dr < 2; ++dr)
            for (int dg = 0; dg < 2; ++dg)
                for (int db = 0; db < 2; ++db) {
                    const double w = (dr ? f[0] : 1.0 - f[0]) * (dg ? f[1] : 1.0 - f[1]) *
                                     (db ? f[2] : 1.0 - f[2]);
                    const Vec3& n = node(dr ? i1[0] : i0[0], dg ? i1[1] : i0[1],
                                         db ? i1[2] : i0[2]);
                    out = out + n * w;
                }
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json flat = nlohmann::json::array();
        for (const Vec3& v : table_) {
            flat.push_back(v.r);
            flat.push_back(v.g);
            flat.push_back(v.b);
        }
        return nlohmann::json{{"lattice", L_}, {"table", std::move(flat)}};
    }

    static Lut3D from_json(const nlohmann::json& j) {
        if (!j.contains("lattice") || !j.contains("table"))
            throw FormatError("Lut3D: missing lattice/table keys");
        Lut3D lut(j.at("lattice").get<int>());
        const auto& flat = j.at("table");
        if (flat.size() != lut.table_.size() * 3)
            throw CorruptFileError("Lut3D: table length mismatch");
        for (std::size_t i = 0; i < lut.table_.size(); ++i)
            lut.table_[i] = {flat[i * 3].get<double>(), flat[i * 3 + 1].get<double>(),
                             flat[i * 3 + 2].get<double>()};
        return lut;
    }

private:
    std::size_t idx(int ri, int gi, int bi) const {
        return (static_cast<std::size_t>(ri) * L_ + gi) * L_ + bi;
    }

    int L_;
    std::vector<Vec3> table_;
};

/// Uniform 1-D curve on [0,1], linear interpolation between knots.
class Lut1D {
public:
    explicit Lut1D(int knots = 256) : values_(static_cast<std::size_t>(knots), 0.0) {
        if (knots < 2) throw ArgumentError("Lut1D: needs >= 2 knots");
    }

    int knots() const { return static_cast<int>(values_.size()); }
    double& value(int i) { return values_[i]; }
    double value(int i) const { return values_[i]; }

    static Lut1D identity(int knots = 256) {
        Lut1D lut(knots);
        for (int i = 0; i < knots; ++i) lut.values_[i] = static_cast<double>(i) / (knots - 1);
        return lut;
    }

    double apply(double u) const {
        const int n = knots();
        const double t = std::clamp(u, 0.0, 1.0) * (n - 1);
        int i = static_cast<int>(t);
        if (i > n - 2) i = n - 2;
        const double f = t - i;
        return values_[i] * (1.0 - f) + values_[i + 1] * f;
    }

    bool monotone_non_decreasing() const {
        for (std::size_t i = 1; i < values_.size(); ++i)
            if (values_[i] < values_[i - 1]) return false;
        return true;
    }

private:
    std::vector<double> values_;
};

/// Reference photofinishing curve: smoothstep u^2(3-2u) blended 50/50 with
/// identity, so 0.5u + 1.5u^2 - u^3, tabulated at 256 knots.
inline Lut1D default_tone_curve(int knots = 256) {
    Lut1D lut(knots);
    for (int i = 0; i < knots; ++i) {
        const double u = static_cast<double>(i) / (knots - 1);
        lut.value(i) = 0.5 * u + 1.5 * u * u - u * u * u;
    }
    return lut;
}

namespace detail {

/// Power curve with a linear toe below x0: h(x) = A x^g + B above the toe,
/// s*x below, C1-matched, h(0)=0, h(1)=1. The toe caps the second
/// derivative so the lattice-sampled transform stays close to its smooth
/// source, which is what keeps the MLP fits inside tolerance.
inline double gamma_toe(double x, double g, double x0 = 0.1) {
    if (g == 1.0) return x;
    const double a = 1.0 / (1.0 + (g - 1.0) * std::pow(x0, g));
    if (x >= x0) return a * std::pow(x, g) + (1.0 - a);
    return a * g * std::pow(x0, g - 1.0) * x;
}

/// Style parameters composed into one smooth color transform.
struct LutRecipe {
    double gamma[3] = {1.0, 1.0, 1.0};   // per-channel gamma 0.7..1.4
    double contrast = 0.0;               // s-curve strength, |a| < 1
    double hue_deg = 0.0;                // rotation about the gray axis
    double saturation = 1.0;             // scale about the luma
    Vec3 shadow_tint{};                  // added with weight (1-l)^2
    Vec3 highlight_tint{};               // added with weight l^2
    double lift = 0.0;                   // matte black lift
};

inline Vec3 apply_recipe(const LutRecipe& rc, const Vec3& in) {
    Vec3 p = in;
    for (int c = 0; c < 3; ++c)
        p[c] = gamma_toe(std::clamp(p[c], 0.0, 1.0), rc.gamma[c]);
    // s-curve: monotone for |contrast| < 1
    for (int c = 0; c < 3; ++c)
        p[c] = p[c] + rc.contrast * p[c] * (1.0 - p[c]) * (2.0 * p[c] - 1.0);
    if (rc.hue_deg != 0.0) {
        // Rodrigues rotation about the normalized gray axis.
        const double th = rc.hue_deg * M_PI / 180.0;
        const double ct = std::cos(th), st = std::sin(th);
        const double k = 1.0 / std::sqrt(3.0);
        const double dotp = k * (p.r + p.g + p.b);
        const Vec3 cross{k * (p.b - p.g), k * (p.r - p.b), k * (p.g - p.r)};
        p = p * ct + cross * st + Vec3{k, k, k} * (dotp * (1.0 - ct));
    }
    const double luma = (p.r + p.g + p.b) / 3.0;
    p = Vec3{luma, luma, luma} + (p - Vec3{luma, luma, luma}) * rc.saturation;
    const double l = std::clamp(luma, 0.0, 1.0);
    p = p + rc.shadow_tint * ((1.0 - l) * (1.0 - l)) + rc.highlight_tint * (l * l);
    p = Vec3{rc.lift, rc.lift, rc.lift} + p * (1.0 - rc.lift);
    return p;
}

inline LutRecipe random_recipe(Rng& rng) {
    LutRecipe rc;
    for (int c = 0; c < 3; ++c) rc.gamma[c] = rng.uniform(0.7, 1.4);
    rc.contrast = rng.uniform(-0.3, 0.45);
    rc.hue_deg = rng.uniform(-25.0, 25.0);
    rc.saturation = rng.uniform(0.6, 1.4);
    for (int c = 0; c < 3; ++c) {
        rc.shadow_tint[c] = rng.uniform(-0.05, 0.05);
        rc.highlight_tint[c] = rng.uniform(-0.05, 0.05);
    }
    rc.lift = rng.uniform(0.0, 0.05);
    return rc;
}

}  // namespace detail

/// Deterministic stylization family. Index 1 is the identity; indices 2..6
/// are fixed named styles (2 is the mild-contrast camera default; 3 vivid,
/// 4 flat-green, 5 warm, 6 cool-matte, referenced by the edit presets);
/// indices 7..k are seeded compositions of the same primitives.
inline std::vector<Lut3D> generate_builtin_luts(int k, std::uint64_t seed, int lattice = 17) {
    if (k < 1) throw ArgumentError("generate_builtin_luts: k must be >= 1");
    using detail::LutRecipe;
    std::vector<LutRecipe> named;
    {
        LutRecipe mild;  // index 2
        mild.contrast = 0.35;
        mild.saturation = 1.08;
        named.push_back(mild);

        LutRecipe vivid;  // index 3
        vivid.contrast = 0.55;
        vivid.saturation = 1.35;
        vivid.hue_deg = 4.0;
        vivid.highlight_tint = {0.02, 0.0, -0.02};
        named.push_back(vivid);

        LutRecipe flat_green;  // index 4
        flat_green.contrast = -0.35;
        flat_green.saturation = 0.85;
        flat_green.gamma[0] = 1.05;
        flat_green.gamma[1] = 0.92;
        flat_green.gamma[2] = 1.05;
        flat_green.shadow_tint = {-0.01, 0.02, -0.01};
        named.push_back(flat_green);

        LutRecipe warm;  // index 5
        warm.gamma[0] = 0.88;
        warm.gamma[2] = 1.18;
        warm.contrast = 0.2;
        warm.saturation = 1.1;
        warm.hue_deg = -6.0;
        warm.highlight_tint = {0.03, 0.01, -0.02};
        named.push_back(warm);

        LutRecipe cool_matte;  // index 6
        cool_matte.gamma[0] = 1.15;
        cool_matte.gamma[2] = 0.9;
        cool_matte.contrast = -0.2;
        cool_matte.saturation = 0.9;
        cool_matte.lift = 0.06;
        cool_matte.shadow_tint = {-0.01, 0.0, 0.03};
        named.push_back(cool_matte);
    }

    std::vector<Lut3D> luts;
    luts.reserve(k);
    luts.push_back(Lut3D::identity(lattice));
    Rng rng = Rng(seed).child(0xB07);
    const double step = 1.0 / (lattice - 1);
    for (int i = 2; i <= k; ++i) {
        const LutRecipe rc = i - 2 < static_cast<int>(named.size())
                                 ? named[i - 2]
                                 : detail::random_recipe(rng);
        // Raw recipe values can leave [0,1] (hue rotation of saturated
        // corners). A single affine squeeze keeps every node in range
        // without adding curvature the MLP would have to chase.
        std::vector<Vec3> raw;
        raw.reserve(static_cast<std::size_t>(lattice) * lattice * lattice);
        double lo = 0.0, hi = 1.0;
        for (int r = 0; r < lattice; ++r)
            for (int g = 0; g < lattice; ++g)
                for (int b = 0; b < lattice; ++b) {
                    const Vec3 v =
                        detail::apply_recipe(rc, {r * step, g * step, b * step});
                    for (int c = 0; c < 3; ++c) {
                        if (!std::isfinite(v[c]))
                            throw NumericError("generate_builtin_luts: non-finite node");
                        lo = std::min(lo, v[c]);
                        hi = std::max(hi, v[c]);
                    }
                    raw.push_back(v);
                }
        Lut3D lut(lattice);
        const double inv = 1.0 / (hi - lo);
        std::size_t idx = 0;
        for (int r = 0; r < lattice; ++r)
            for (int g = 0; g < lattice; ++g)
                for (int b = 0; b < lattice; ++b, ++idx)
                    lut.node(r, g, b) = {(raw[idx].r - lo) * inv, (raw[idx].g - lo) * inv,
                                         (raw[idx].b - lo) * inv};
        luts.push_back(std::move(lut));
    }
    return luts;
}

}  // namespace editisp
