#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "editisp/errors.hpp"
#include "editisp/isp.hpp"
#include "editisp/rng.hpp"
#include "editisp/vecmat.hpp"

namespace editisp {

/// Chromaticity dictionary the illuminant prior is fitted to. Entries are
/// [r/g, b/g] pairs of plausible scene illuminants.
struct IlluminantDictionary {
    std::vector<Vec2> entries;
};

/// Invariants for dictionaries read from disk: at least 3 positive entries
/// spanning a 2-D hull. Fitting alone tolerates weaker inputs.
inline void validate_dictionary(const IlluminantDictionary& dict) {
    if (dict.entries.size() < 3)
        throw ArgumentError("illuminant dictionary needs at least 3 entries");
    for (const auto& e : dict.entries)
        if (!(e.x > 0.0) || !(e.y > 0.0) || !std::isfinite(e.x) || !std::isfinite(e.y))
            throw ArgumentError("illuminant dictionary entries must be positive finite");
    const Vec2& a = dict.entries[0];
    double max_cross = 0.0;
    for (std::size_t i = 1; i + 1 < dict.entries.size(); ++i)
        for (std::size_t j = i + 1; j < dict.entries.size(); ++j) {
            const Vec2 u = dict.entries[i] - a;
            const Vec2 v = dict.entries[j] - a;
            max_cross = std::max(max_cross, std::abs(u.x * v.y - u.y * v.x));
        }
    if (max_cross < 1e-12)
        throw ArgumentError("illuminant dictionary entries are collinear");
}

inline nlohmann::json dictionary_to_json(const IlluminantDictionary& dict) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : dict.entries) arr.push_back({e.x, e.y});
    return arr;
}

inline IlluminantDictionary dictionary_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw FormatError("illuminant dictionary: expected a JSON array");
    IlluminantDictionary dict;
    for (const auto& item : j) {
        if (!item.is_array() || item.size() != 2 || !item[0].is_number() ||
            !item[1].is_number())
            throw FormatError("illuminant dictionary: entries must be [r/g, b/g] pairs");
        dict.entries.push_back({item[0].get<double>(), item[1].get<double>()});
    }
    return dict;
}

inline void save_dictionary(const IlluminantDictionary& dict, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << dictionary_to_json(dict).dump(2) << "\n";
    if (!f) throw IoError("write failed: " + path);
}

inline IlluminantDictionary load_dictionary(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("illuminant dictionary parse: " + std::string(e.what()));
    }
    IlluminantDictionary dict = dictionary_from_json(j);
    validate_dictionary(dict);
    return dict;
}

struct GaussianFit {
    Vec2 mu{0.0, 0.0};
    Sym2 sigma{0.0, 0.0, 0.0};
};

/// Empirical mean and population covariance (divisor M) of the dictionary.
inline GaussianFit fit_illuminant_gaussian(const IlluminantDictionary& dict) {
    const std::size_t m = dict.entries.size();
    if (m == 0) throw ArgumentError("fit_illuminant_gaussian: empty dictionary");
    GaussianFit fit;
    for (const auto& e : dict.entries) {
        if (!std::isfinite(e.x) || !std::isfinite(e.y))
            throw ArgumentError("fit_illuminant_gaussian: non-finite entry");
        fit.mu = fit.mu + e;
    }
    fit.mu = fit.mu * (1.0 / static_cast<double>(m));
    for (const auto& e : dict.entries) {
        const Vec2 d = e - fit.mu;
        fit.sigma.a += d.x * d.x;
        fit.sigma.b += d.x * d.y;
        fit.sigma.c += d.y * d.y;
    }
    fit.sigma.a /= static_cast<double>(m);
    fit.sigma.b /= static_cast<double>(m);
    fit.sigma.c /= static_cast<double>(m);
    return fit;
}

struct SamplerConfig {
    double sigma_ev = 0.75;
    int k_luts = 15;
    int max_poly_degree = 5;
    double wb_threshold = 0.15;
    std::uint64_t seed = 0;
};

inline void validate_sampler_config(const SamplerConfig& cfg) {
    if (!(cfg.sigma_ev > 0.0)) throw ArgumentError("SamplerConfig: sigma_ev must be > 0");
    if (cfg.k_luts < 1) throw ArgumentError("SamplerConfig: k_luts must be >= 1");
    if (cfg.max_poly_degree < 1)
        throw ArgumentError("SamplerConfig: max_poly_degree must be >= 1");
    if (!(cfg.wb_threshold > 0.0))
        throw ArgumentError("SamplerConfig: wb_threshold must be > 0");
}

/// Andrew monotone chain; returns the hull CCW without a repeated endpoint.
/// Collinear inputs yield a degenerate (< 3 vertex) polygon.
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
    std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Vec2& a, const Vec2& b) {
                              return a.x == b.x && a.y == b.y;
                          }),
              pts.end());
    const std::size_t n = pts.size();
    if (n < 3) return pts;
    auto cross = [](const Vec2& o, const Vec2& a, const Vec2& b) {
        return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    };
    std::vector<Vec2> hull(2 * n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    const std::size_t lower = k + 1;
    for (std::size_t i = n - 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

/// Inclusive point-in-convex-polygon test (boundary counts as inside).
inline bool point_in_hull(const std::vector<Vec2>& hull, const Vec2& p) {
    if (hull.size() < 3) return false;
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const Vec2& a = hull[i];
        const Vec2& b = hull[(i + 1) % hull.size()];
        const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        if (cross < -1e-12) return false;
    }
    return true;
}

inline double sample_exposure(const SamplerConfig& cfg, Rng& rng) {
    return rng.normal(0.0, cfg.sigma_ev);
}

/// Truncated-Gaussian illuminant: rejection against the dictionary hull and
/// an Euclidean ball around the as-shot point. After 1000 failed attempts
/// the as-shot chromaticity itself is returned.
inline Vec2 sample_illuminant(const GaussianFit& fit, const IlluminantDictionary& dict,
                              const Vec2& asn, const SamplerConfig& cfg, Rng& rng) {
    if (!(asn.x > 0.0) || !(asn.y > 0.0))
        throw ArgumentError("sample_illuminant: asn components must be positive");
    const std::vector<Vec2> hull = convex_hull(dict.entries);
    const auto chol = fit.sigma.cholesky();
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const double n1 = rng.normal();
        const double n2 = rng.normal();
        const Vec2 omega{fit.mu.x + chol[0] * n1,
                         fit.mu.y + chol[1] * n1 + chol[2] * n2};
        if (!(omega.x > 0.0) || !(omega.y > 0.0)) continue;
        if (!point_in_hull(hull, omega)) continue;
        if ((omega - asn).norm() > cfg.wb_threshold) continue;
        return omega;
    }
    return asn;
}

inline int sample_lut_index(const SamplerConfig& cfg, Rng& rng) {
    return rng.uniform_int(1, cfg.k_luts);
}

/// S(u) = int_0^u q / int_0^1 q with q >= 0 of degree tau-1, tau ~ U{1..d}.
/// Returned as monomial coefficients c0..c_tau; S(0)=0 and S(1)=1 exactly.
inline std::vector<double> sample_tone_polynomial(const SamplerConfig& cfg, Rng& rng) {
    const int tau = rng.uniform_int(1, cfg.max_poly_degree);
    std::vector<double> c(tau + 1, 0.0);
    double total = 0.0;
    for (int i = 0; i < tau; ++i) {
        c[i + 1] = rng.uniform01() / (i + 1);
        total += c[i + 1];
    }
    if (total < 1e-300) return identity_tone_poly();
    for (auto& v : c) v /= total;
    return c;
}

/// One full draw; the sub-sampler order (exposure, illuminant, LUT, tone)
/// is part of the determinism contract.
inline EditParams sample_edit_params(const GaussianFit& fit, const IlluminantDictionary& dict,
                                     const Vec2& asn, const SamplerConfig& cfg, Rng& rng) {
    validate_sampler_config(cfg);
    EditParams phi;
    phi.epsilon = sample_exposure(cfg, rng);
    phi.omega = sample_illuminant(fit, dict, asn, cfg, rng);
    phi.rho = sample_lut_index(cfg, rng);
    phi.tone_poly = sample_tone_polynomial(cfg, rng);
    return phi;
}

}  // namespace editisp
