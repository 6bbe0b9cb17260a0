#pragma once

// Evaluation reports: per-image quality metrics for the RAW reconstruction
// and for its rendering under each frozen edit preset, with per-condition
// means. Reports serialize to CSV plus a JSON sidecar carrying the metric
// variants and the manifest hash for provenance.

#include <algorithm>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "editisp/datasynth.hpp"
#include "editisp/errors.hpp"
#include "editisp/metrics.hpp"
#include "editisp/presets.hpp"
#include "editisp/train.hpp"

namespace editisp {

inline constexpr const char* kMetricVariant = "psnr-cap100 ssim-8x8-uniform deltae-cie76";

struct EvalRow {
    std::string image;
    std::string condition;
    double psnr_db = 0.0;
    double ssim_val = 0.0;
    double delta_e_val = 0.0;
};

struct EvalReport {
    std::string model_id;
    std::string manifest_hash;
    std::string preset_version;
    std::string metric_variant;
    std::vector<std::string> conditions;
    std::vector<EvalRow> rows;   // one per (image, condition)
    std::vector<EvalRow> means;  // one per condition, image == "MEAN"
};

/// Reconstruction under test: receives the loaded triple, returns the RAW
/// estimate. Model wrappers must only look at the sRGB, the downsampled RAW,
/// and the metadata; tests may inject the ground truth as an upper bound.
using ReconstructFn = std::function<RawImage(const LoadedTriple&)>;

namespace detail {

inline RawImage clamp01_image(RawImage img) {
    for (std::size_t k = 0; k < img.size(); ++k)
        img.data()[k] = std::clamp(img.data()[k], 0.0, 1.0);
    return img;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace detail

inline EvalReport evaluate_reconstruction(const DatasetManifest& m, const std::string& root,
                                          const std::vector<EditPreset>& presets,
                                          const IspBank& bank,
                                          const ReconstructFn& reconstruct,
                                          const std::string& model_id) {
    if (m.test.empty()) throw ArgumentError("evaluate: empty test split");

    EvalReport rep;
    rep.model_id = model_id;
    rep.manifest_hash = detail::hash_hex(detail::fnv1a(manifest_to_json(m).dump()));
    rep.preset_version = kPresetSetVersion;
    rep.metric_variant = kMetricVariant;
    rep.conditions.push_back("RAW");
    for (const EditPreset& p : presets) rep.conditions.push_back(p.name);

    for (const DatasetEntry& e : m.test) {
        const LoadedTriple t = load_entry(root, e);
        const RawImage xhat = detail::clamp01_image(reconstruct(t));
        if (xhat.height() != t.x.height() || xhat.width() != t.x.width())
            throw ArgumentError("evaluate: reconstruction shape mismatch");
        const std::string id = t.meta.scene_id.empty() ? e.raw : t.meta.scene_id;

        rep.rows.push_back({id, "RAW", psnr(t.x, xhat), ssim(t.x, xhat), delta_e(t.x, xhat)});
        for (const EditPreset& p : presets) {
            const EditParams phi = resolve_preset(p, t.meta);
            const SrgbImage z = render(t.x, phi, t.meta, bank);
            const SrgbImage zhat = render(xhat, phi, t.meta, bank);
            rep.rows.push_back({id, p.name, psnr(z, zhat), ssim(z, zhat), delta_e(z, zhat)});
        }
    }

    for (const std::string& cond : rep.conditions) {
        EvalRow mean{"MEAN", cond, 0.0, 0.0, 0.0};
        int n = 0;
        for (const EvalRow& r : rep.rows) {
            if (r.condition != cond) continue;
            mean.psnr_db += r.psnr_db;
            mean.ssim_val += r.ssim_val;
            mean.delta_e_val += r.delta_e_val;
            ++n;
        }
        mean.psnr_db /= n;
        mean.ssim_val /= n;
        mean.delta_e_val /= n;
        rep.means.push_back(mean);
    }
    return rep;
}

inline EvalReport evaluate_model(const Unet& model, const DatasetManifest& m,
                                 const std::string& root,
                                 const std::vector<EditPreset>& presets, const IspBank& bank,
                                 const std::string& model_id) {
    const int factor = model.config().metadata_factor;
    ReconstructFn fn = [&model, factor](const LoadedTriple& t) {
        const detail::NetInput in = detail::make_net_input(t.x, t.y, factor);
        return model.forward(in.srgb, in.meta_up);
    };
    return evaluate_reconstruction(m, root, presets, bank, fn, model_id);
}

/// Means must equal the per-condition averages of the rows; metric ranges
/// must be sane. Throws on violation.
inline void validate_report(const EvalReport& rep) {
    for (const EvalRow& r : rep.rows) {
        if (r.delta_e_val < 0.0) throw NumericError("report: negative delta E");
        if (r.ssim_val < -1.0 || r.ssim_val > 1.0) throw NumericError("report: SSIM out of range");
    }
    for (const EvalRow& mean : rep.means) {
        double p = 0.0, s = 0.0, d = 0.0;
        int n = 0;
        for (const EvalRow& r : rep.rows) {
            if (r.condition != mean.condition) continue;
            p += r.psnr_db;
            s += r.ssim_val;
            d += r.delta_e_val;
            ++n;
        }
        if (n == 0) throw NumericError("report: mean for unknown condition");
        if (std::abs(mean.psnr_db - p / n) > 1e-9 || std::abs(mean.ssim_val - s / n) > 1e-9 ||
            std::abs(mean.delta_e_val - d / n) > 1e-9)
            throw NumericError("report: stored means do not match rows");
    }
}

inline void save_report_csv(const EvalReport& rep, const std::string& path) {
    std::string out = "image,condition,psnr_db,ssim,delta_e\n";
    char buf[160];
    auto emit = [&](const EvalRow& r) {
        std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%.17g,%.17g\n", r.image.c_str(),
                      r.condition.c_str(), r.psnr_db, r.ssim_val, r.delta_e_val);
        out += buf;
    };
    for (const EvalRow& r : rep.rows) emit(r);
    for (const EvalRow& r : rep.means) emit(r);
    detail::write_file(path, out);
}

inline void save_report_meta(const EvalReport& rep, const std::string& path) {
    const nlohmann::json j = {{"model_id", rep.model_id},
                              {"manifest_hash", rep.manifest_hash},
                              {"preset_version", rep.preset_version},
                              {"metric_variant", rep.metric_variant},
                              {"conditions", rep.conditions}};
    detail::write_file(path, j.dump(2) + "\n");
}

/// Parses a CSV written by save_report_csv back into rows (means included,
/// recognizable by image == "MEAN").
inline std::vector<EvalRow> load_report_csv(const std::string& path) {
    const std::string text = detail::read_file(path);
    std::vector<EvalRow> rows;
    std::size_t pos = text.find('\n');
    if (pos == std::string::npos) throw FormatError("report csv: missing header");
    if (text.substr(0, pos) != "image,condition,psnr_db,ssim,delta_e")
        throw FormatError("report csv: unexpected header");
    ++pos;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        EvalRow r;
        std::size_t c1 = line.find(',');
        std::size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c2 == std::string::npos) throw FormatError("report csv: malformed row");
        r.image = line.substr(0, c1);
        r.condition = line.substr(c1 + 1, c2 - c1 - 1);
        if (std::sscanf(line.c_str() + c2 + 1, "%lg,%lg,%lg", &r.psnr_db, &r.ssim_val,
                        &r.delta_e_val) != 3)
            throw FormatError("report csv: malformed metrics");
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace editisp
