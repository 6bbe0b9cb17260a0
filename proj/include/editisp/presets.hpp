#pragma once

// Frozen edit presets used for evaluation. Each preset fixes exposure, look
// index, and tone curve; white balance is resolved against the image
// metadata (as-shot, optionally pulled toward a target chromaticity) so the
// preset is fully determined per image without any sampling.

#include <optional>
#include <string>
#include <vector>

#include "editisp/image.hpp"
#include "editisp/isp.hpp"
#include "editisp/vecmat.hpp"

namespace editisp {

inline constexpr const char* kPresetSetVersion = "presets-v1";

struct EditPreset {
    std::string name;
    double epsilon = 0.0;
    int rho = 1;
    std::vector<double> tone_poly = identity_tone_poly();
    bool shift_wb = false;    // false: use the as-shot neutral unchanged
    Vec2 wb_target{1.0, 1.0};  // chromaticity pulled toward when shift_wb
    double wb_max_dist = 0.0;  // cap on the pull distance
};

inline EditParams resolve_preset(const EditPreset& p, const ImageMeta& meta) {
    EditParams phi;
    phi.epsilon = p.epsilon;
    phi.rho = p.rho;
    phi.tone_poly = p.tone_poly;
    phi.omega = meta.asn;
    if (p.shift_wb) {
        const Vec2 dir{p.wb_target.x - meta.asn.x, p.wb_target.y - meta.asn.y};
        const double dist = dir.norm();
        if (dist > 1e-15) {
            const double step = std::min(dist, p.wb_max_dist);
            phi.omega = {meta.asn.x + dir.x / dist * step, meta.asn.y + dir.y / dist * step};
        }
    }
    return phi;
}

/// The five frozen evaluation edits, ordered mild to aggressive. Tone curves
/// are monotone cubics with exact [0,1] endpoints.
inline std::vector<EditPreset> builtin_presets() {
    std::vector<EditPreset> out;

    EditPreset e1;
    e1.name = "Edit1";
    e1.rho = 2;
    out.push_back(e1);

    EditPreset e2;
    e2.name = "Edit2";
    e2.epsilon = 0.7;
    e2.rho = 3;
    out.push_back(e2);

    EditPreset e3;
    e3.name = "Edit3";
    e3.epsilon = 0.5;
    e3.rho = 4;
    out.push_back(e3);

    EditPreset e4;
    e4.name = "Edit4";
    e4.epsilon = -0.25;
    e4.rho = 5;
    e4.tone_poly = {0.0, 1.0, 0.6, -0.6};  // lifts mids and highlights
    out.push_back(e4);

    EditPreset e5;
    e5.name = "Edit5";
    e5.epsilon = 1.5;
    e5.rho = 6;
    e5.tone_poly = {0.0, 1.8, -1.6, 0.8};  // lifts shadows, matte shoulder
    e5.shift_wb = true;
    e5.wb_target = kCstAnchorA;  // toward tungsten
    e5.wb_max_dist = 0.135;
    out.push_back(e5);

    return out;
}

/// Resolves a named fine-tuning target. Accepts any builtin preset name plus
/// "ev+2" (camera default pushed two stops up).
inline std::optional<EditParams> find_edit_target(const std::string& name,
                                                  const ImageMeta& meta) {
    if (name == "ev+2") {
        EditParams phi;
        phi.epsilon = 2.0;
        phi.omega = meta.asn;
        phi.rho = 2;
        return phi;
    }
    for (const EditPreset& p : builtin_presets())
        if (p.name == name) return resolve_preset(p, meta);
    return std::nullopt;
}

}  // namespace editisp
