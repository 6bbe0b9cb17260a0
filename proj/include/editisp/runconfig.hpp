#pragma once

// Resolved run configuration for the command-line workflows. A single JSON
// file carries the seed, the directory layout, and the sampler/model/scene
// parameters; its FNV-1a hash is embedded in output sidecars so artifacts
// can be traced back to the exact configuration that produced them.

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "editisp/datasynth.hpp"
#include "editisp/errors.hpp"
#include "editisp/evalreport.hpp"
#include "editisp/presets.hpp"
#include "editisp/rawp.hpp"
#include "editisp/sampler.hpp"
#include "editisp/unet.hpp"

namespace editisp {

struct RunConfig {
    std::uint64_t seed = 1;
    std::string dataset_dir = "data";
    std::string weights_dir = "weights";
    std::string report_dir = "reports";
    SamplerConfig sampler;
    ModelConfig model = desk_model();
    SceneConfig scene;
    int n_train = 300;
    int n_val = 30;
    int n_test = 50;
    std::string preset_version = kPresetSetVersion;
    std::string metric_variant = kMetricVariant;

    /// Command-line defaults run at desk scale; the in-code ModelConfig
    /// defaults describe the full-size configuration instead.
    static ModelConfig desk_model() {
        ModelConfig m;
        m.base_filters = 8;
        m.depth = 3;
        m.metadata_factor = 8;
        m.patch_side = 32;
        m.batch_size = 8;
        m.epochs = 10;
        m.learning_rate = 1e-3;
        m.ft_learning_rate = 1e-4;
        m.ft_iterations = 50;
        m.loss_mode = LossMode::Combined;
        m.lambda = 2.0;
        return m;
    }
};

inline nlohmann::json runconfig_to_json(const RunConfig& c) {
    return {{"seed", c.seed},
            {"dataset_dir", c.dataset_dir},
            {"weights_dir", c.weights_dir},
            {"report_dir", c.report_dir},
            {"sampler",
             {{"sigma_ev", c.sampler.sigma_ev},
              {"k_luts", c.sampler.k_luts},
              {"max_poly_degree", c.sampler.max_poly_degree},
              {"wb_threshold", c.sampler.wb_threshold},
              {"seed", c.sampler.seed}}},
            {"model",
             {{"base_filters", c.model.base_filters},
              {"depth", c.model.depth},
              {"metadata_factor", c.model.metadata_factor},
              {"patch_side", c.model.patch_side},
              {"batch_size", c.model.batch_size},
              {"epochs", c.model.epochs},
              {"learning_rate", c.model.learning_rate},
              {"ft_learning_rate", c.model.ft_learning_rate},
              {"ft_iterations", c.model.ft_iterations},
              {"loss_mode", static_cast<int>(c.model.loss_mode)},
              {"lambda", c.model.lambda}}},
            {"scene",
             {{"height", c.scene.height},
              {"width", c.scene.width},
              {"w_gradients", c.scene.w_gradients},
              {"w_shapes", c.scene.w_shapes},
              {"w_highlights", c.scene.w_highlights},
              {"w_texture", c.scene.w_texture},
              {"stretch", c.scene.stretch}}},
            {"counts", {{"train", c.n_train}, {"val", c.n_val}, {"test", c.n_test}}},
            {"preset_version", c.preset_version},
            {"metric_variant", c.metric_variant}};
}

inline RunConfig runconfig_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw FormatError("run config: expected a JSON object");
    RunConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        c.dataset_dir = j.value("dataset_dir", c.dataset_dir);
        c.weights_dir = j.value("weights_dir", c.weights_dir);
        c.report_dir = j.value("report_dir", c.report_dir);
        if (j.contains("sampler")) {
            const auto& s = j["sampler"];
            c.sampler.sigma_ev = s.value("sigma_ev", c.sampler.sigma_ev);
            c.sampler.k_luts = s.value("k_luts", c.sampler.k_luts);
            c.sampler.max_poly_degree = s.value("max_poly_degree", c.sampler.max_poly_degree);
            c.sampler.wb_threshold = s.value("wb_threshold", c.sampler.wb_threshold);
            c.sampler.seed = s.value("seed", c.sampler.seed);
        }
        if (j.contains("model")) {
            const auto& m = j["model"];
            c.model.base_filters = m.value("base_filters", c.model.base_filters);
            c.model.depth = m.value("depth", c.model.depth);
            c.model.metadata_factor = m.value("metadata_factor", c.model.metadata_factor);
            c.model.patch_side = m.value("patch_side", c.model.patch_side);
            c.model.batch_size = m.value("batch_size", c.model.batch_size);
            c.model.epochs = m.value("epochs", c.model.epochs);
            c.model.learning_rate = m.value("learning_rate", c.model.learning_rate);
            c.model.ft_learning_rate = m.value("ft_learning_rate", c.model.ft_learning_rate);
            c.model.ft_iterations = m.value("ft_iterations", c.model.ft_iterations);
            const int mode = m.value("loss_mode", static_cast<int>(c.model.loss_mode));
            if (mode < 0 || mode > 2) throw FormatError("run config: loss_mode out of range");
            c.model.loss_mode = static_cast<LossMode>(mode);
            c.model.lambda = m.value("lambda", c.model.lambda);
        }
        if (j.contains("scene")) {
            const auto& s = j["scene"];
            c.scene.height = s.value("height", c.scene.height);
            c.scene.width = s.value("width", c.scene.width);
            c.scene.w_gradients = s.value("w_gradients", c.scene.w_gradients);
            c.scene.w_shapes = s.value("w_shapes", c.scene.w_shapes);
            c.scene.w_highlights = s.value("w_highlights", c.scene.w_highlights);
            c.scene.w_texture = s.value("w_texture", c.scene.w_texture);
            c.scene.stretch = s.value("stretch", c.scene.stretch);
        }
        if (j.contains("counts")) {
            const auto& n = j["counts"];
            c.n_train = n.value("train", c.n_train);
            c.n_val = n.value("val", c.n_val);
            c.n_test = n.value("test", c.n_test);
        }
        c.preset_version = j.value("preset_version", c.preset_version);
        c.metric_variant = j.value("metric_variant", c.metric_variant);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("run config: " + std::string(e.what()));
    }
    return c;
}

inline RunConfig load_runconfig(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("run config parse: " + std::string(e.what()));
    }
    return runconfig_from_json(j);
}

inline void save_runconfig(const RunConfig& c, const std::string& path) {
    detail::write_file(path, runconfig_to_json(c).dump(2) + "\n");
}

/// Hash of the fully resolved configuration (after file load and flag
/// overrides), stable across reruns of the same settings.
inline std::string runconfig_hash(const RunConfig& c) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(detail::fnv1a(runconfig_to_json(c).dump())));
    return buf;
}

}  // namespace editisp
