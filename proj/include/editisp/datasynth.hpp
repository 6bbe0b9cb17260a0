#pragma once

// Synthetic scene generator and dataset builder. Scenes are composited from
// seeded primitives (gradient fields, flat shapes, highlights, texture noise)
// and stand in for captured RAW data; the builder writes RAWP triples plus an
// illuminant dictionary and a manifest so downstream runs are reproducible
// from a single seed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "editisp/color.hpp"
#include "editisp/errors.hpp"
#include "editisp/image.hpp"
#include "editisp/isp.hpp"
#include "editisp/rawp.hpp"
#include "editisp/rng.hpp"
#include "editisp/sampler.hpp"
#include "editisp/vecmat.hpp"

namespace editisp {

struct SceneConfig {
    int height = 64;
    int width = 64;
    double w_gradients = 1.0;
    double w_shapes = 0.8;
    double w_highlights = 0.4;
    double w_texture = 0.25;
    double stretch = 1.0;  // power shaping applied before the final range remap
    std::uint64_t seed = 0;
};

inline void validate_scene_config(const SceneConfig& cfg) {
    if (cfg.height <= 0 || cfg.width <= 0 || cfg.height % 16 != 0 || cfg.width % 16 != 0)
        throw ArgumentError("scene config: size must be positive and divisible by 16");
    const double ws[] = {cfg.w_gradients, cfg.w_shapes, cfg.w_highlights, cfg.w_texture};
    double sum = 0.0;
    for (double w : ws) {
        if (!std::isfinite(w) || w < 0.0)
            throw ArgumentError("scene config: mix weights must be finite and >= 0");
        sum += w;
    }
    if (sum <= 0.0) throw ArgumentError("scene config: mix weights must not all be zero");
    if (!std::isfinite(cfg.stretch) || cfg.stretch <= 0.0)
        throw ArgumentError("scene config: stretch must be positive");
}

namespace detail {

// Each primitive fills a [0,1] canvas from its own child stream, so zeroing a
// mix weight skips the primitive without shifting the draws of the others.

inline void scene_gradients(RawImage& img, Rng rng) {
    constexpr double kTau = 2.0 * std::numbers::pi;
    const int h = img.height(), w = img.width();
    const double base = kTau / std::max(h, w);
    struct Layer {
        double fx, fy, phase;
        double gain[3];
    };
    std::array<Layer, 3> layers;
    for (auto& l : layers) {
        const double theta = rng.uniform(0.0, kTau);
        const double freq = base * rng.uniform(0.5, 2.0);
        l.fx = freq * std::cos(theta);
        l.fy = freq * std::sin(theta);
        l.phase = rng.uniform(0.0, kTau);
        for (double& g : l.gain) g = rng.uniform(0.25, 1.0);
    }
    double tot[3] = {0.0, 0.0, 0.0};
    for (const auto& l : layers)
        for (int c = 0; c < 3; ++c) tot[c] += l.gain[c];
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v[3] = {0.0, 0.0, 0.0};
            for (const auto& l : layers) {
                const double s = 0.5 + 0.5 * std::sin(l.fx * x + l.fy * y + l.phase);
                v[0] += l.gain[0] * s;
                v[1] += l.gain[1] * s;
                v[2] += l.gain[2] * s;
            }
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = v[c] / tot[c];
        }
}

inline void scene_shapes(RawImage& img, Rng rng) {
    const int h = img.height(), w = img.width();
    double bg[3];
    for (double& c : bg) c = rng.uniform(0.1, 0.9);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = bg[c];
    const int n_shapes = 6;
    for (int s = 0; s < n_shapes; ++s) {
        const double cy = rng.uniform(0.0, h - 1.0);
        const double cx = rng.uniform(0.0, w - 1.0);
        const double ry = rng.uniform(h / 16.0, h / 4.0);
        const double rx = rng.uniform(w / 16.0, w / 4.0);
        double col[3];
        for (double& c : col) c = rng.uniform(0.05, 0.95);
        const bool ellipse = (s % 2 == 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double dy = (y - cy) / ry, dx = (x - cx) / rx;
                const bool inside = ellipse ? (dy * dy + dx * dx <= 1.0)
                                            : (std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0);
                if (!inside) continue;
                for (int c = 0; c < 3; ++c) img.at(y, x, c) = col[c];
            }
    }
}

inline void scene_highlights(RawImage& img, Rng rng) {
    const int h = img.height(), w = img.width();
    std::fill(img.data(), img.data() + img.size(), 0.0);
    for (int b = 0; b < 3; ++b) {
        const double cy = rng.uniform(0.0, h - 1.0);
        const double cx = rng.uniform(0.0, w - 1.0);
        const double sigma = rng.uniform(std::min(h, w) / 16.0, std::min(h, w) / 6.0);
        const double amp = rng.uniform(0.5, 1.0);
        double gain[3];
        for (double& g : gain) g = rng.uniform(0.85, 1.0);
        const double inv = 1.0 / (2.0 * sigma * sigma);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double r2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                const double g = amp * std::exp(-r2 * inv);
                for (int c = 0; c < 3; ++c)
                    img.at(y, x, c) = std::min(1.0, img.at(y, x, c) + gain[c] * g);
            }
    }
}

inline void scene_texture(RawImage& img, Rng rng) {
    const int h = img.height(), w = img.width();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double luma = rng.uniform01();
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = 0.7 * luma + 0.3 * rng.uniform01();
        }
}

}  // namespace detail

/// Composites the weighted primitives, shapes the result with a power curve,
/// then remaps affinely so the sample extremes land exactly on [0.02, 0.98].
inline RawImage gen_scene(const SceneConfig& cfg, Rng& rng) {
    validate_scene_config(cfg);
    const int h = cfg.height, w = cfg.width;
    RawImage out(h, w);
    std::fill(out.data(), out.data() + out.size(), 0.0);

    const double ws[] = {cfg.w_gradients, cfg.w_shapes, cfg.w_highlights, cfg.w_texture};
    const double wsum = ws[0] + ws[1] + ws[2] + ws[3];
    using CompFn = void (*)(RawImage&, Rng);
    const CompFn fns[] = {detail::scene_gradients, detail::scene_shapes,
                          detail::scene_highlights, detail::scene_texture};
    for (int i = 0; i < 4; ++i) {
        if (ws[i] <= 0.0) continue;
        RawImage comp(h, w);
        fns[i](comp, rng.child(static_cast<std::uint64_t>(i) + 1));
        const double scale = ws[i] / wsum;
        for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] += scale * comp.data()[k];
    }

    if (cfg.stretch != 1.0)
        for (std::size_t k = 0; k < out.size(); ++k)
            out.data()[k] = std::pow(out.data()[k], cfg.stretch);

    double lo = out.data()[0], hi = out.data()[0];
    for (std::size_t k = 1; k < out.size(); ++k) {
        lo = std::min(lo, out.data()[k]);
        hi = std::max(hi, out.data()[k]);
    }
    if (hi - lo < 1e-12) {
        // Degenerate composite (all primitives flat); fall back to a ramp so
        // the span contract still holds.
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c)
                    out.at(y, x, c) = 0.02 + 0.96 * x / std::max(1, w - 1);
        return out;
    }
    const double scale = 0.96 / (hi - lo);
    for (std::size_t k = 0; k < out.size(); ++k)
        out.data()[k] = 0.02 + (out.data()[k] - lo) * scale;
    return out;
}

inline RawImage gen_scene(const SceneConfig& cfg) {
    Rng rng(cfg.seed);
    return gen_scene(cfg, rng);
}

// Fixed calibration pair attached to every generated image. The cool anchor
// is the native sRGB primaries; the warm anchor tilts the red/blue responses
// the way a tungsten calibration would.
inline Mat3 generator_cst_b() { return color::srgb_to_xyz(); }

inline Mat3 generator_cst_a() {
    Mat3 m = color::srgb_to_xyz();
    for (int r = 0; r < 3; ++r) {
        m.m[r * 3 + 0] *= 1.08;
        m.m[r * 3 + 2] *= 0.90;
    }
    return m;
}

/// Chromaticity quadrilateral (r/g, b/g) the generator draws true illuminants
/// from, spanning warm to cool casts. Counter-clockwise, convex.
inline std::vector<Vec2> generator_illuminant_quad() {
    return {{0.7, 0.55}, {1.8, 0.45}, {1.9, 0.85}, {0.8, 0.95}};
}

inline Vec2 sample_generator_illuminant(Rng& rng) {
    const std::vector<Vec2> quad = generator_illuminant_quad();
    double xlo = quad[0].x, xhi = quad[0].x, ylo = quad[0].y, yhi = quad[0].y;
    for (const Vec2& v : quad) {
        xlo = std::min(xlo, v.x);
        xhi = std::max(xhi, v.x);
        ylo = std::min(ylo, v.y);
        yhi = std::max(yhi, v.y);
    }
    const std::vector<Vec2> hull = convex_hull(quad);
    for (int i = 0; i < 10000; ++i) {
        const Vec2 p{rng.uniform(xlo, xhi), rng.uniform(ylo, yhi)};
        if (point_in_hull(hull, p)) return p;
    }
    return {(xlo + xhi) / 2.0, (ylo + yhi) / 2.0};
}

/// Applies the inverse of white balance (multiplies R and B by omega) to turn
/// a balanced scene into an un-balanced sensor image, and records omega plus
/// the generator calibration pair in the metadata.
inline std::pair<RawImage, ImageMeta> assign_illuminant(const RawImage& x,
                                                        const Vec2& omega_true, Rng&) {
    if (!(omega_true.x > 0.0) || !(omega_true.y > 0.0) ||
        !std::isfinite(omega_true.x) || !std::isfinite(omega_true.y))
        throw ArgumentError("assign_illuminant: omega components must be positive");
    RawImage out(x.height(), x.width());
    for (int y = 0; y < x.height(); ++y)
        for (int c = 0; c < x.width(); ++c) {
            out.at(y, c, 0) = x.at(y, c, 0) * omega_true.x;
            out.at(y, c, 1) = x.at(y, c, 1);
            out.at(y, c, 2) = x.at(y, c, 2) * omega_true.y;
        }
    ImageMeta meta;
    meta.asn = omega_true;
    meta.cst_a = generator_cst_a();
    meta.cst_b = generator_cst_b();
    return {std::move(out), meta};
}

/// Camera-default rendering parameters: as-shot white balance, the mild
/// contrast look (index 2), no exposure or tone adjustment.
inline EditParams reference_edit_params(const ImageMeta& meta) {
    EditParams phi;
    phi.epsilon = 0.0;
    phi.omega = meta.asn;
    phi.rho = 2;
    phi.tone_poly = identity_tone_poly();
    return phi;
}

inline SrgbImage render_reference(const RawImage& x, const ImageMeta& meta,
                                  const IspBank& bank) {
    return render(x, reference_edit_params(meta), meta, bank);
}

struct DatasetEntry {
    std::string raw;
    std::string srgb;
    std::string meta;
};

struct DatasetManifest {
    std::vector<DatasetEntry> train, val, test;
    std::uint64_t seed = 0;
    std::string phi0;
    std::string dictionary;
};

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
    auto split = [](const std::vector<DatasetEntry>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& e : v)
            arr.push_back({{"raw", e.raw}, {"srgb", e.srgb}, {"meta", e.meta}});
        return arr;
    };
    return {{"splits", {{"train", split(m.train)}, {"val", split(m.val)}, {"test", split(m.test)}}},
            {"seed", m.seed},
            {"phi0", m.phi0},
            {"dictionary", m.dictionary}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("splits") || !j.contains("seed") ||
        !j.contains("phi0") || !j.contains("dictionary"))
        throw FormatError("dataset manifest: missing required keys");
    auto split = [](const nlohmann::json& arr, const char* name) {
        if (!arr.is_array()) throw FormatError(std::string("dataset manifest: bad split ") + name);
        std::vector<DatasetEntry> out;
        for (const auto& e : arr) {
            if (!e.contains("raw") || !e.contains("srgb") || !e.contains("meta"))
                throw FormatError("dataset manifest: entry missing a path");
            out.push_back({e["raw"].get<std::string>(), e["srgb"].get<std::string>(),
                           e["meta"].get<std::string>()});
        }
        return out;
    };
    DatasetManifest m;
    const auto& s = j["splits"];
    m.train = split(s.value("train", nlohmann::json::array()), "train");
    m.val = split(s.value("val", nlohmann::json::array()), "val");
    m.test = split(s.value("test", nlohmann::json::array()), "test");
    m.seed = j["seed"].get<std::uint64_t>();
    m.phi0 = j["phi0"].get<std::string>();
    m.dictionary = j["dictionary"].get<std::string>();
    return m;
}

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
    detail::write_file(path, manifest_to_json(m).dump(2) + "\n");
}

inline DatasetManifest load_manifest(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("dataset manifest parse: " + std::string(e.what()));
    }
    return manifest_from_json(j);
}

/// Splits must not share raw paths and every referenced file must exist under
/// the dataset root.
inline void validate_manifest(const DatasetManifest& m, const std::string& root) {
    namespace fs = std::filesystem;
    std::vector<std::string> raws;
    auto visit = [&](const std::vector<DatasetEntry>& split) {
        for (const auto& e : split) {
            raws.push_back(e.raw);
            for (const std::string* p : {&e.raw, &e.srgb, &e.meta})
                if (!fs::exists(fs::path(root) / *p))
                    throw ArgumentError("dataset manifest: missing file " + *p);
        }
    };
    visit(m.train);
    visit(m.val);
    visit(m.test);
    std::sort(raws.begin(), raws.end());
    if (std::adjacent_find(raws.begin(), raws.end()) != raws.end())
        throw ArgumentError("dataset manifest: splits share a raw path");
    if (!fs::exists(fs::path(root) / m.dictionary))
        throw ArgumentError("dataset manifest: missing dictionary " + m.dictionary);
}

struct LoadedTriple {
    RawImage x;
    SrgbImage y;
    ImageMeta meta;
};

inline LoadedTriple load_entry(const std::string& root, const DatasetEntry& e) {
    LoadedTriple t{load_rawp_linear(root + "/" + e.raw), load_rawp_srgb(root + "/" + e.srgb),
                   load_meta(root + "/" + e.raw)};
    return t;
}

namespace detail {

inline RawImage quantize_image(const RawImage& img) {
    const std::string bytes = encode_rawp(img.data(), img.height(), img.width(),
                                          Colorspace::Linear);
    auto payload = decode_rawp(bytes, "quantize");
    RawImage out(payload.h, payload.w);
    std::copy(payload.data.begin(), payload.data.end(), out.data());
    return out;
}

}  // namespace detail

/// Generates the synthetic corpus: per-image seeded scenes, true illuminants
/// from the generator prior, camera-default renders, the illuminant
/// dictionary built from the training ASNs, and a manifest tying it together.
/// RAW values are quantized to the file grid before rendering so the stored
/// pairs re-render bit-exactly from disk.
inline DatasetManifest build_dataset(int n_train, int n_val, int n_test,
                                     const SceneConfig& scene_cfg, const IspBank& bank,
                                     const std::string& out_dir, std::uint64_t seed) {
    namespace fs = std::filesystem;
    if (n_train < 1 || n_val < 1 || n_test < 1)
        throw ArgumentError("build_dataset: split counts must be >= 1");
    validate_scene_config(scene_cfg);

    const char* split_names[] = {"train", "val", "test"};
    const int counts[] = {n_train, n_val, n_test};
    for (const char* s : split_names) fs::create_directories(fs::path(out_dir) / s);

    DatasetManifest manifest;
    manifest.seed = seed;
    manifest.phi0 = "ev=0 wb=as-shot lut=2 tone=identity";
    manifest.dictionary = "dictionary.json";

    Rng root(seed);
    IlluminantDictionary dict;
    int global = 0;
    for (int s = 0; s < 3; ++s) {
        std::vector<DatasetEntry>* split =
            s == 0 ? &manifest.train : (s == 1 ? &manifest.val : &manifest.test);
        for (int i = 0; i < counts[s]; ++i, ++global) {
            Rng img_rng = root.child(static_cast<std::uint64_t>(global) + 1);
            Rng scene_rng = img_rng.child(1);
            Rng omega_rng = img_rng.child(2);

            RawImage scene = gen_scene(scene_cfg, scene_rng);
            const Vec2 omega = sample_generator_illuminant(omega_rng);
            auto [x, meta] = assign_illuminant(scene, omega, omega_rng);

            char id[32];
            std::snprintf(id, sizeof id, "%s_%04d", split_names[s], i);
            meta.scene_id = id;

            const RawImage x_q = detail::quantize_image(x);
            const SrgbImage y = render_reference(x_q, meta, bank);

            DatasetEntry e;
            e.raw = std::string(split_names[s]) + "/" + id + ".rawp";
            e.srgb = std::string(split_names[s]) + "/" + id + "_srgb.rawp";
            e.meta = detail::sidecar_path(e.raw);
            const std::string raw_path = out_dir + "/" + e.raw;
            save_rawp(raw_path, x_q);
            save_meta(raw_path, meta);
            save_rawp(out_dir + "/" + e.srgb, y);
            split->push_back(std::move(e));

            if (s == 0) dict.entries.push_back(omega);
        }
    }

    save_dictionary(dict, out_dir + "/" + manifest.dictionary);
    save_manifest(manifest, out_dir + "/manifest.json");
    return manifest;
}

/// Re-renders up to `count` evenly spaced pairs from disk and checks the
/// stored sRGB bytes match exactly.
inline bool verify_rerender(const DatasetManifest& m, const std::string& root,
                            const IspBank& bank, int count) {
    std::vector<const DatasetEntry*> all;
    for (const auto* split : {&m.train, &m.val, &m.test})
        for (const auto& e : *split) all.push_back(&e);
    if (all.empty()) return true;
    const int n = static_cast<int>(all.size());
    const int k = std::min(count, n);
    for (int i = 0; i < k; ++i) {
        const DatasetEntry& e = *all[static_cast<std::size_t>(i) * n / k];
        LoadedTriple t = load_entry(root, e);
        const SrgbImage y = render_reference(t.x, t.meta, bank);
        const std::string bytes = detail::encode_rawp(y.data(), y.height(), y.width(),
                                                      Colorspace::Srgb);
        if (bytes != detail::read_file(root + "/" + e.srgb)) return false;
    }
    return true;
}

}  // namespace editisp
