// Command-line front end wiring the library into reproducible workflows:
// LUT fitting, dataset synthesis, training, per-image fine-tuning,
// evaluation, rendering, gradient checking, and edit-parameter dumps.
// Every command is deterministic given (config, seed); output sidecars embed
// the resolved config hash. Exit codes: 0 ok, 1 argument/format, 2 numeric,
// 3 I/O.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "editisp/datasynth.hpp"
#include "editisp/evalreport.hpp"
#include "editisp/isp.hpp"
#include "editisp/losses.hpp"
#include "editisp/lut.hpp"
#include "editisp/metrics.hpp"
#include "editisp/mlp_fit.hpp"
#include "editisp/presets.hpp"
#include "editisp/runconfig.hpp"
#include "editisp/sampler.hpp"
#include "editisp/train.hpp"
#include "editisp/unet.hpp"

namespace fs = std::filesystem;
using namespace editisp;

namespace {

struct Cli {
    RunConfig cfg;
    std::string out_override;
    int threads = 1;
};

void write_provenance(const std::string& path, const Cli& cli, const std::string& command,
                      nlohmann::json extra) {
    extra["command"] = command;
    extra["config_hash"] = runconfig_hash(cli.cfg);
    extra["seed"] = cli.cfg.seed;
    detail::write_file(path, extra.dump(2) + "\n");
}

std::string color_weight_path(const std::string& dir, int index) {
    char name[32];
    std::snprintf(name, sizeof name, "color_%02d.mlpw", index);
    return dir + "/" + name;
}

IspBank load_bank(const std::string& weights_dir, int k) {
    std::vector<Mlp> color;
    for (int i = 1; i <= k; ++i) color.push_back(Mlp::load(color_weight_path(weights_dir, i)));
    return IspBank(std::move(color), Mlp::load(weights_dir + "/tone.mlpw"));
}

std::vector<TrainItem> load_split(const DatasetManifest& m, const std::string& root,
                                  const std::vector<DatasetEntry>& split) {
    std::vector<TrainItem> out;
    for (const DatasetEntry& e : split) {
        LoadedTriple t = load_entry(root, e);
        out.push_back({std::move(t.x), std::move(t.y), std::move(t.meta)});
    }
    return out;
}

EditParams edit_params_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ArgumentError("edit parameters: " + std::string(e.what()));
    }
    EditParams phi;
    phi.epsilon = j.value("epsilon", 0.0);
    if (j.contains("omega")) {
        if (!j["omega"].is_array() || j["omega"].size() != 2)
            throw ArgumentError("edit parameters: omega must be [r/g, b/g]");
        phi.omega = {j["omega"][0].get<double>(), j["omega"][1].get<double>()};
    }
    phi.rho = j.value("rho", 1);
    if (j.contains("tone_poly")) phi.tone_poly = j["tone_poly"].get<std::vector<double>>();
    return phi;
}

nlohmann::json edit_params_to_json(const EditParams& phi) {
    return {{"epsilon", phi.epsilon},
            {"omega", {phi.omega.x, phi.omega.y}},
            {"rho", phi.rho},
            {"tone_poly", phi.tone_poly}};
}

// ---------------------------------------------------------------------------
// fit-luts

// Max-error fits occasionally land in a bad basin; a fresh init at double
// budget rescues them. Deterministic: attempt a uses stream child(base+1000a).
// Keeps the best attempt by held-out max error and sums iteration counts.
template <typename FitFn>
Mlp fit_with_restarts(const FitFn& fit, Rng& root, std::uint64_t stream_base, int budget,
                      FitReport& best, int& attempts) {
    constexpr int kMaxAttempts = 3;
    Mlp best_mlp(1, {1}, 1, root);  // placeholder, overwritten by attempt 0
    attempts = 0;
    for (int a = 0; a < kMaxAttempts; ++a) {
        Rng child = root.child(stream_base + 1000 * static_cast<std::uint64_t>(a));
        FitReport rep;
        Mlp mlp = fit(a == 0 ? budget : 2 * budget, child, rep);
        ++attempts;
        if (a == 0 || rep.max_err < best.max_err) {
            rep.iterations += a == 0 ? 0 : best.iterations;
            rep.seconds += a == 0 ? 0.0 : best.seconds;
            best = rep;
            best_mlp = std::move(mlp);
        } else {
            best.iterations += rep.iterations;
            best.seconds += rep.seconds;
        }
        if (best.passed) break;
    }
    return best_mlp;
}

int cmd_fit_luts(const Cli& cli, int budget_color, int budget_tone) {
    if (budget_color < 1 || budget_tone < 1)
        throw ArgumentError("fit-luts: budgets must be positive");
    const std::string out_dir = cli.out_override.empty() ? cli.cfg.weights_dir : cli.out_override;
    fs::create_directories(out_dir);
    const int k = cli.cfg.sampler.k_luts;
    const std::vector<Lut3D> luts = generate_builtin_luts(k, cli.cfg.seed);
    const Lut1D tone_curve = default_tone_curve();

    Rng root(cli.cfg.seed);
    nlohmann::json color_reports = nlohmann::json::array();
    bool all_passed = true;

    for (int i = 0; i < k; ++i) {
        FitReport rep;
        int attempts = 0;
        const auto fit = [&](int budget, Rng& rng, FitReport& r) {
            return fit_mlp_to_lut3d(luts[i], default_color_arch(), budget, rng, r);
        };
        Mlp mlp = fit_with_restarts(fit, root, static_cast<std::uint64_t>(i) + 1, budget_color,
                                    rep, attempts);
        mlp.save(color_weight_path(out_dir, i + 1));
        color_reports.push_back({{"index", i + 1},
                                 {"max_err", rep.max_err},
                                 {"mean_err", rep.mean_err},
                                 {"iterations", rep.iterations},
                                 {"attempts", attempts},
                                 {"passed", rep.passed},
                                 {"seconds", rep.seconds}});
        all_passed = all_passed && rep.passed;
        std::printf("color %2d/%d: max_err=%.5f (tol %.5f) iters=%d attempts=%d %s\n", i + 1, k,
                    rep.max_err, rep.tolerance, rep.iterations, attempts,
                    rep.passed ? "ok" : "FAIL");
        std::fflush(stdout);
    }

    FitReport tone_rep;
    int tone_attempts = 0;
    const auto tone_fit = [&](int budget, Rng& rng, FitReport& r) {
        return fit_mlp_to_tonecurve(tone_curve, default_tone_arch(), budget, rng, r);
    };
    Mlp tone_mlp = fit_with_restarts(tone_fit, root, 500, budget_tone, tone_rep, tone_attempts);
    tone_mlp.save(out_dir + "/tone.mlpw");
    all_passed = all_passed && tone_rep.passed;
    std::printf("tone: max_err=%.5f (tol %.5f) iters=%d attempts=%d %s\n", tone_rep.max_err,
                tone_rep.tolerance, tone_rep.iterations, tone_attempts,
                tone_rep.passed ? "ok" : "FAIL");

    nlohmann::json report = {{"k", k},
                             {"color_tolerance", kColorFitTolerance},
                             {"tone_tolerance", kToneFitTolerance},
                             {"color", color_reports},
                             {"tone",
                              {{"max_err", tone_rep.max_err},
                               {"mean_err", tone_rep.mean_err},
                               {"iterations", tone_rep.iterations},
                               {"passed", tone_rep.passed},
                               {"seconds", tone_rep.seconds}}},
                             {"all_passed", all_passed}};
    Cli no_time = cli;
    write_provenance(out_dir + "/fit_report.json", no_time, "fit-luts", report);
    std::printf("fit report: %s\n", (out_dir + "/fit_report.json").c_str());
    if (!all_passed) throw NumericError("fit-luts: at least one fit missed tolerance");
    return 0;
}

// ---------------------------------------------------------------------------
// gen-data

int cmd_gen_data(Cli cli) {
    if (!cli.out_override.empty()) cli.cfg.dataset_dir = cli.out_override;
    const IspBank bank = load_bank(cli.cfg.weights_dir, cli.cfg.sampler.k_luts);
    DatasetManifest m = build_dataset(cli.cfg.n_train, cli.cfg.n_val, cli.cfg.n_test,
                                      cli.cfg.scene, bank, cli.cfg.dataset_dir, cli.cfg.seed);
    validate_manifest(m, cli.cfg.dataset_dir);
    if (!verify_rerender(m, cli.cfg.dataset_dir, bank, 10))
        throw NumericError("gen-data: re-render check failed");
    write_provenance(cli.cfg.dataset_dir + "/run_gen_data.json", cli, "gen-data",
                     {{"train", cli.cfg.n_train}, {"val", cli.cfg.n_val}, {"test", cli.cfg.n_test}});
    std::printf("manifest: %s\n", (cli.cfg.dataset_dir + "/manifest.json").c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(Cli cli, const std::string& loss_mode_flag, bool fixed_pipeline,
              const std::string& name_flag) {
    if (!loss_mode_flag.empty()) {
        if (loss_mode_flag == "raw")
            cli.cfg.model.loss_mode = LossMode::RawOnly;
        else if (loss_mode_flag == "srgb")
            cli.cfg.model.loss_mode = LossMode::SrgbOnly;
        else if (loss_mode_flag == "combined")
            cli.cfg.model.loss_mode = LossMode::Combined;
        else
            throw ArgumentError("train: unknown loss mode " + loss_mode_flag);
    }

    const DatasetManifest m = load_manifest(cli.cfg.dataset_dir + "/manifest.json");
    const IspBank bank = load_bank(cli.cfg.weights_dir, cli.cfg.sampler.k_luts);
    const IlluminantDictionary dict =
        load_dictionary(cli.cfg.dataset_dir + "/" + m.dictionary);
    const std::vector<TrainItem> train_set = load_split(m, cli.cfg.dataset_dir, m.train);
    const std::vector<TrainItem> val_set = load_split(m, cli.cfg.dataset_dir, m.val);

    FixedEditFn fixed;
    if (fixed_pipeline) fixed = [](const ImageMeta& meta) { return reference_edit_params(meta); };

    const TrainResult res = train(cli.cfg.model, train_set, val_set, dict, cli.cfg.sampler,
                                  bank, cli.cfg.seed, fixed);

    const char* mode_tag = cli.cfg.model.loss_mode == LossMode::RawOnly
                               ? "raw"
                               : (cli.cfg.model.loss_mode == LossMode::SrgbOnly ? "srgb"
                                                                                : "combined");
    std::string stem = name_flag.empty() ? std::string("model_") + mode_tag : name_flag;
    if (fixed_pipeline && name_flag.empty()) stem += "_fixed";

    const std::string ckpt_dir = cli.out_override.empty() ? cli.cfg.weights_dir : cli.out_override;
    const std::string log_dir = cli.out_override.empty() ? cli.cfg.report_dir : cli.out_override;
    fs::create_directories(ckpt_dir);
    fs::create_directories(log_dir);

    const std::string ckpt = ckpt_dir + "/" + stem + ".rnet";
    res.model.save(ckpt);
    save_train_log(res.log, log_dir + "/train_" + stem + ".csv");
    write_provenance(log_dir + "/train_" + stem + ".run.json", cli, "train",
                     {{"loss_mode", mode_tag},
                      {"fixed_pipeline", fixed_pipeline},
                      {"best_epoch", res.best_epoch},
                      {"best_val", res.best_val},
                      {"checkpoint", ckpt}});
    std::printf("checkpoint: %s (best epoch %d, val %.6g)\n", ckpt.c_str(), res.best_epoch,
                res.best_val);
    return 0;
}

// ---------------------------------------------------------------------------
// finetune

int cmd_finetune(const Cli& cli, const std::string& ckpt_path, const std::string& image_id,
                 const std::string& target_name, const std::string& phi_json) {
    if (!target_name.empty() && !phi_json.empty())
        throw ArgumentError("finetune: give either a target name or explicit parameters");
    const Unet model = Unet::load(ckpt_path);
    const DatasetManifest m = load_manifest(cli.cfg.dataset_dir + "/manifest.json");
    const IspBank bank = load_bank(cli.cfg.weights_dir, cli.cfg.sampler.k_luts);
    const IlluminantDictionary dict =
        load_dictionary(cli.cfg.dataset_dir + "/" + m.dictionary);

    const DatasetEntry* entry = nullptr;
    for (const auto* split : {&m.test, &m.val, &m.train}) {
        for (const DatasetEntry& e : *split)
            if (e.raw == image_id || fs::path(e.raw).stem().string() == image_id) entry = &e;
        if (entry) break;
    }
    if (!entry) throw ArgumentError("finetune: image not found in manifest: " + image_id);

    const LoadedTriple t = load_entry(cli.cfg.dataset_dir, *entry);
    const RawImage x_d = downsample(t.x, model.config().metadata_factor);

    std::string target_mode = "sampled";
    std::optional<EditParams> target;
    if (!target_name.empty()) {
        target = find_edit_target(target_name, t.meta);
        if (!target) throw ArgumentError("finetune: unknown target edit " + target_name);
        target_mode = "fixed:" + target_name;
    } else if (!phi_json.empty()) {
        target = edit_params_from_json(phi_json);
        target_mode = "fixed:explicit";
    }

    const Unet tuned = finetune(model, t.y, x_d, t.meta, target ? &*target : nullptr, dict,
                                cli.cfg.sampler, bank, cli.cfg.seed);

    const std::string out_dir =
        cli.out_override.empty() ? fs::path(ckpt_path).parent_path().string() : cli.out_override;
    fs::create_directories(out_dir.empty() ? "." : out_dir);
    const std::string stem = fs::path(ckpt_path).stem().string();
    const std::string out_path =
        (out_dir.empty() ? "." : out_dir) + "/" + stem + "_ft.rnet";
    tuned.save(out_path);
    write_provenance(out_path + ".run.json", cli, "finetune",
                     {{"checkpoint", ckpt_path},
                      {"image", entry->raw},
                      {"target_mode", target_mode},
                      {"iterations", model.config().ft_iterations}});
    std::printf("fine-tuned checkpoint: %s (target %s)\n", out_path.c_str(),
                target_mode.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const Cli& cli, const std::vector<std::string>& ckpts) {
    if (ckpts.empty()) throw ArgumentError("eval: at least one checkpoint required");
    const DatasetManifest m = load_manifest(cli.cfg.dataset_dir + "/manifest.json");
    const IspBank bank = load_bank(cli.cfg.weights_dir, cli.cfg.sampler.k_luts);
    const std::vector<EditPreset> presets = builtin_presets();

    std::vector<EvalReport> reports;
    for (const std::string& path : ckpts) {
        const Unet model = Unet::load(path);
        EvalReport rep = evaluate_model(model, m, cli.cfg.dataset_dir, presets, bank,
                                        fs::path(path).stem().string());
        validate_report(rep);
        reports.push_back(std::move(rep));
    }

    const std::string out_dir = cli.out_override.empty() ? cli.cfg.report_dir : cli.out_override;
    fs::create_directories(out_dir);

    std::string csv = "model,image,condition,psnr_db,ssim,delta_e\n";
    char buf[192];
    auto emit = [&](const std::string& model, const EvalRow& r) {
        std::snprintf(buf, sizeof buf, "%s,%s,%s,%.17g,%.17g,%.17g\n", model.c_str(),
                      r.image.c_str(), r.condition.c_str(), r.psnr_db, r.ssim_val,
                      r.delta_e_val);
        csv += buf;
    };
    for (const EvalReport& rep : reports) {
        for (const EvalRow& r : rep.rows) emit(rep.model_id, r);
        for (const EvalRow& r : rep.means) emit(rep.model_id, r);
    }
    // Deltas: mean-row difference of each model against the first block.
    for (std::size_t k = 1; k < reports.size(); ++k)
        for (std::size_t c = 0; c < reports[k].means.size(); ++c) {
            EvalRow d = reports[k].means[c];
            d.psnr_db -= reports[0].means[c].psnr_db;
            d.ssim_val -= reports[0].means[c].ssim_val;
            d.delta_e_val -= reports[0].means[c].delta_e_val;
            emit("DELTA(" + reports[k].model_id + "-" + reports[0].model_id + ")", d);
        }
    const std::string csv_path = out_dir + "/eval.csv";
    detail::write_file(csv_path, csv);

    nlohmann::json models = nlohmann::json::array();
    for (const EvalReport& rep : reports) models.push_back(rep.model_id);
    write_provenance(out_dir + "/eval.json", cli, "eval",
                     {{"models", models},
                      {"manifest_hash", reports[0].manifest_hash},
                      {"preset_version", reports[0].preset_version},
                      {"metric_variant", reports[0].metric_variant}});
    std::printf("report: %s\n", csv_path.c_str());
    for (const EvalReport& rep : reports)
        for (const EvalRow& r : rep.means)
            std::printf("%s %-6s psnr=%.3f ssim=%.4f deltaE=%.3f\n", rep.model_id.c_str(),
                        r.condition.c_str(), r.psnr_db, r.ssim_val, r.delta_e_val);
    return 0;
}

// ---------------------------------------------------------------------------
// render

int cmd_render(const Cli& cli, const std::string& raw_path, const std::string& preset_name,
               const std::string& phi_json, std::string out_file) {
    if (!preset_name.empty() && !phi_json.empty())
        throw ArgumentError("render: give either a preset or explicit parameters");
    const IspBank bank = load_bank(cli.cfg.weights_dir, cli.cfg.sampler.k_luts);
    const RawImage x = load_rawp_linear(raw_path);
    const ImageMeta meta = load_meta(raw_path);

    EditParams phi;
    if (!preset_name.empty()) {
        const std::optional<EditParams> p = find_edit_target(preset_name, meta);
        if (!p) throw ArgumentError("render: unknown preset " + preset_name);
        phi = *p;
    } else if (!phi_json.empty()) {
        phi = edit_params_from_json(phi_json);
    } else {
        phi = reference_edit_params(meta);
    }

    const SrgbImage z = render(x, phi, meta, bank);

    if (out_file.empty()) {
        const std::string dir =
            cli.out_override.empty() ? fs::path(raw_path).parent_path().string() : cli.out_override;
        if (!cli.out_override.empty()) fs::create_directories(cli.out_override);
        out_file = (dir.empty() ? "." : dir) + "/" + fs::path(raw_path).stem().string() +
                   "_render.rawp";
    }
    save_rawp(out_file, z);

    // 8-bit preview next to the quantized render.
    const std::string ppm = fs::path(out_file).replace_extension(".ppm").string();
    std::string body = "P6\n" + std::to_string(z.width()) + " " + std::to_string(z.height()) +
                       "\n255\n";
    for (int y = 0; y < z.height(); ++y)
        for (int xx = 0; xx < z.width(); ++xx)
            for (int c = 0; c < 3; ++c)
                body.push_back(static_cast<char>(
                    std::lround(std::clamp(z.at(y, xx, c), 0.0, 1.0) * 255.0)));
    detail::write_file(ppm, body);
    std::printf("render: %s preview: %s\n", out_file.c_str(), ppm.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

struct FdSuite {
    std::string name;
    double max_rel = 0.0;
    long cases = 0;
    double tolerance = 0.0;
    bool passed() const { return max_rel < tolerance && cases >= 100; }
};

double rel_err(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / denom;
}

// Coordinates whose stage values sit close to a clamp boundary move through
// a kink under perturbation; finite differences are only compared away from
// those. Margins are generous relative to the 1e-5 step.
std::vector<bool> fd_safe_mask(const RawImage& x, const EditParams& phi, const ImageMeta& meta,
                               const IspBank& bank, double margin) {
    const std::size_t n = x.size();
    std::vector<bool> safe(n, true);
    RenderTape tape;
    pipeline_forward(x, phi, meta, bank, &tape);
    const RawImage p2 = whitebalance_forward(exposure_forward(x, phi.epsilon), phi.omega, meta);
    const RawImage p3 = color_forward(p2, phi.rho, bank);
    for (std::size_t i = 0; i < n; ++i) {
        const double v2 = p2.data()[i];
        const double v3 = p3.data()[i];
        const double w = tape.w_pre[i];
        const bool near = std::abs(v2) < margin || std::abs(v2 - 1.0) < margin ||
                          std::abs(v3) < margin || std::abs(v3 - 1.0) < margin ||
                          std::abs(w - kGammaClampDelta) < margin || std::abs(w - 1.0) < margin;
        if (near) {
            const std::size_t pixel = i / 3;
            for (int c = 0; c < 3; ++c) safe[pixel * 3 + c] = false;
        }
    }
    return safe;
}

FdSuite gradcheck_isp(const Cli& cli, const IspBank& bank, bool tamper) {
    FdSuite suite{"isp-pipeline", 0.0, 0, 1e-4};
    const double h = 1e-5;
    Rng rng(cli.cfg.seed + 101);

    IlluminantDictionary dict;
    dict.entries = generator_illuminant_quad();
    Rng dict_rng = rng.child(1);
    for (int i = 0; i < 6; ++i) dict.entries.push_back(sample_generator_illuminant(dict_rng));
    const GaussianFit fit = fit_illuminant_gaussian(dict);
    SamplerConfig scfg = cli.cfg.sampler;
    scfg.k_luts = std::min(scfg.k_luts, bank.lut_count());

    for (int trial = 0; trial < 8; ++trial) {
        Rng trial_rng = rng.child(10 + trial);
        RawImage x(6, 5);
        for (std::size_t k = 0; k < x.size(); ++k)
            x.data()[k] = trial_rng.uniform(0.05, 0.85);
        ImageMeta meta;
        meta.cst_a = generator_cst_a();
        meta.cst_b = generator_cst_b();
        meta.asn = sample_generator_illuminant(trial_rng);
        const EditParams phi = sample_edit_params(fit, dict, meta.asn, scfg, trial_rng);

        RenderTape tape;
        const SrgbImage z = pipeline_forward(x, phi, meta, bank, &tape);
        SrgbImage cot(z.height(), z.width());
        for (std::size_t k = 0; k < cot.size(); ++k) cot.data()[k] = trial_rng.uniform(-1.0, 1.0);
        RawImage grad = pipeline_backward(tape, cot, bank);
        if (tamper && trial == 0) grad.data()[0] += 1e-2;

        const std::vector<bool> safe = fd_safe_mask(x, phi, meta, bank, 1e-3);
        for (std::size_t k = 0; k < x.size(); ++k) {
            if (!safe[k]) continue;
            RawImage xp = x, xm = x;
            xp.data()[k] += h;
            xm.data()[k] -= h;
            const SrgbImage zp = render(xp, phi, meta, bank);
            const SrgbImage zm = render(xm, phi, meta, bank);
            double jp = 0.0, jm = 0.0;
            for (std::size_t q = 0; q < zp.size(); ++q) {
                jp += cot.data()[q] * zp.data()[q];
                jm += cot.data()[q] * zm.data()[q];
            }
            const double fd = (jp - jm) / (2.0 * h);
            suite.max_rel = std::max(suite.max_rel, rel_err(fd, grad.data()[k]));
            ++suite.cases;
        }
    }
    return suite;
}

FdSuite gradcheck_losses(const Cli& cli, const IspBank& bank) {
    FdSuite suite{"losses", 0.0, 0, 1e-4};
    const double h = 1e-5;
    Rng rng(cli.cfg.seed + 202);

    IlluminantDictionary dict;
    dict.entries = generator_illuminant_quad();
    const GaussianFit fit = fit_illuminant_gaussian(dict);
    SamplerConfig scfg = cli.cfg.sampler;
    scfg.k_luts = std::min(scfg.k_luts, bank.lut_count());

    for (int trial = 0; trial < 4; ++trial) {
        Rng trial_rng = rng.child(20 + trial);
        const int side = 8;
        RawImage x(side, side), xhat(side, side);
        for (std::size_t k = 0; k < x.size(); ++k) {
            x.data()[k] = trial_rng.uniform(0.05, 0.85);
            xhat.data()[k] = trial_rng.uniform(0.05, 0.85);
        }
        ImageMeta meta;
        meta.cst_a = generator_cst_a();
        meta.cst_b = generator_cst_b();
        meta.asn = sample_generator_illuminant(trial_rng);
        const EditParams phi = sample_edit_params(fit, dict, meta.asn, scfg, trial_rng);

        const LossValue total = l_total(x, xhat, phi, meta, bank, 1.5);
        const std::vector<bool> safe = fd_safe_mask(xhat, phi, meta, bank, 1e-3);
        for (std::size_t k = 0; k < xhat.size(); ++k) {
            if (!safe[k]) continue;
            RawImage xp = xhat, xm = xhat;
            xp.data()[k] += h;
            xm.data()[k] -= h;
            const double jp = l_total(x, xp, phi, meta, bank, 1.5).value;
            const double jm = l_total(x, xm, phi, meta, bank, 1.5).value;
            const double fd = (jp - jm) / (2.0 * h);
            suite.max_rel = std::max(suite.max_rel, rel_err(fd, total.grad.data()[k]));
            ++suite.cases;
        }

        // Downsampled variant exercises the adjoint path.
        const int factor = 2;
        const RawImage x_d = downsample(x, factor);
        const LossValue ft = l_srgb_ft_downsampled(x_d, xhat, factor, phi, meta, bank);
        const std::vector<bool> safe_d = fd_safe_mask(downsample(xhat, factor), phi, meta,
                                                      bank, 2e-3);
        for (std::size_t k = 0; k < xhat.size(); ++k) {
            const std::size_t pixel = k / 3;
            const int y = static_cast<int>(pixel) / side, xx = static_cast<int>(pixel) % side;
            const std::size_t dpix =
                static_cast<std::size_t>(y / factor) * (side / factor) + xx / factor;
            if (!safe_d[dpix * 3 + k % 3]) continue;
            RawImage xp = xhat, xm = xhat;
            xp.data()[k] += h;
            xm.data()[k] -= h;
            const double jp = l_srgb_ft_downsampled(x_d, xp, factor, phi, meta, bank).value;
            const double jm = l_srgb_ft_downsampled(x_d, xm, factor, phi, meta, bank).value;
            const double fd = (jp - jm) / (2.0 * h);
            suite.max_rel = std::max(suite.max_rel, rel_err(fd, ft.grad.data()[k]));
            ++suite.cases;
        }
    }
    return suite;
}

FdSuite gradcheck_model(const Cli& cli) {
    FdSuite suite{"model", 0.0, 0, 1e-3};
    const double h = 1e-5;
    Rng rng(cli.cfg.seed + 303);

    ModelConfig cfg;
    cfg.base_filters = 4;
    cfg.depth = 2;
    cfg.metadata_factor = 4;
    cfg.patch_side = 16;
    Unet net = Unet::random_init(cfg, rng);

    SrgbImage srgb(16, 16);
    RawImage meta_up(16, 16);
    for (std::size_t k = 0; k < srgb.size(); ++k) {
        srgb.data()[k] = rng.uniform01();
        meta_up.data()[k] = rng.uniform01();
    }

    UnetTape tape;
    const RawImage out = net.forward(srgb, meta_up, &tape);
    RawImage cot(16, 16);
    for (std::size_t k = 0; k < cot.size(); ++k) cot.data()[k] = rng.uniform(-1.0, 1.0);
    const std::vector<ConvParams> grads = net.backward(tape, cot);

    auto objective = [&](const Unet& model) {
        const RawImage o = model.forward(srgb, meta_up);
        double j = 0.0;
        for (std::size_t k = 0; k < o.size(); ++k) j += cot.data()[k] * o.data()[k];
        return j;
    };

    const auto layers = net.all_layers();
    for (int probe = 0; probe < 120; ++probe) {
        const int li = rng.uniform_int(0, static_cast<int>(layers.size()) - 1);
        Unet perturbed = net;
        auto mut = perturbed.all_layers();
        const bool bias = rng.uniform01() < 0.25 && !mut[li]->b.empty();
        double analytic;
        std::size_t idx;
        if (bias) {
            idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(mut[li]->b.size()) - 1));
            analytic = grads[li].b[idx];
            mut[li]->b[idx] += h;
        } else {
            idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(mut[li]->w.size()) - 1));
            analytic = grads[li].w[idx];
            mut[li]->w[idx] += h;
        }
        const double jp = objective(perturbed);
        if (bias)
            mut[li]->b[idx] -= 2.0 * h;
        else
            mut[li]->w[idx] -= 2.0 * h;
        const double jm = objective(perturbed);
        const double fd = (jp - jm) / (2.0 * h);
        suite.max_rel = std::max(suite.max_rel, rel_err(fd, analytic));
        ++suite.cases;
    }
    return suite;
}

int cmd_gradcheck(const Cli& cli) {
    const IspBank bank = load_bank(cli.cfg.weights_dir, cli.cfg.sampler.k_luts);
    const bool tamper = std::getenv("EDITISP_GRADCHECK_TAMPER") != nullptr;

    std::vector<FdSuite> suites;
    suites.push_back(gradcheck_isp(cli, bank, tamper));
    suites.push_back(gradcheck_losses(cli, bank));
    suites.push_back(gradcheck_model(cli));

    bool ok = true;
    for (const FdSuite& s : suites) {
        std::printf("%-14s max_rel=%.3e cases=%ld tol=%.0e %s\n", s.name.c_str(), s.max_rel,
                    s.cases, s.tolerance, s.passed() ? "ok" : "FAIL");
        ok = ok && s.passed();
    }
    if (!ok) throw NumericError("gradcheck: a suite exceeded tolerance");
    return 0;
}

// ---------------------------------------------------------------------------
// sample-edits

int cmd_sample_edits(const Cli& cli, int count, const std::string& out_file) {
    if (count < 1) throw ArgumentError("sample-edits: count must be >= 1");
    const DatasetManifest m = load_manifest(cli.cfg.dataset_dir + "/manifest.json");
    const IlluminantDictionary dict =
        load_dictionary(cli.cfg.dataset_dir + "/" + m.dictionary);
    const GaussianFit fit = fit_illuminant_gaussian(dict);

    Rng rng(cli.cfg.seed);
    nlohmann::json arr = nlohmann::json::array();
    for (int i = 0; i < count; ++i) {
        Rng child = rng.child(static_cast<std::uint64_t>(i) + 1);
        const Vec2 asn = dict.entries[i % dict.entries.size()];
        arr.push_back(edit_params_to_json(sample_edit_params(fit, dict, asn, cli.cfg.sampler,
                                                             child)));
    }
    const std::string text = arr.dump(2) + "\n";
    if (out_file.empty()) {
        std::fputs(text.c_str(), stdout);
    } else {
        detail::write_file(out_file, text);
        std::printf("edits: %s\n", out_file.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Differentiable ISP toolkit: fit looks, synthesize data, train and "
                 "evaluate edit-robust RAW reconstruction"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed_flag;
    Cli cli;
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--seed", seed_flag, "override the config seed");
    app.add_option("--out", cli.out_override, "override the command's output directory");
    app.add_option("--threads", cli.threads, "worker thread budget")->check(CLI::Range(1, 64));

    auto* fit = app.add_subcommand("fit-luts", "fit color/tone MLPs to the builtin looks");
    int budget_color = kDefaultColorFitBudget, budget_tone = kDefaultToneFitBudget;
    fit->add_option("--budget-color", budget_color, "iteration budget per color fit");
    fit->add_option("--budget-tone", budget_tone, "iteration budget for the tone fit");

    auto* gen = app.add_subcommand("gen-data", "synthesize the RAW/sRGB dataset");

    auto* tr = app.add_subcommand("train", "train the reconstruction model");
    std::string loss_mode_flag, name_flag;
    bool fixed_pipeline = false;
    tr->add_option("--loss-mode", loss_mode_flag, "raw | srgb | combined");
    tr->add_flag("--fixed-pipeline", fixed_pipeline,
                 "disable edit sampling; render the camera default instead");
    tr->add_option("--name", name_flag, "checkpoint stem override");

    auto* ft = app.add_subcommand("finetune", "adapt a checkpoint to one image");
    std::string ckpt_path, image_id, target_name, phi_json;
    ft->add_option("--checkpoint", ckpt_path, "input checkpoint")->required();
    ft->add_option("--image", image_id, "image id (manifest stem) to adapt to")->required();
    ft->add_option("--target", target_name, "preset name or ev+2; omit to sample edits");
    ft->add_option("--phi", phi_json, "explicit edit parameters as JSON");

    auto* ev = app.add_subcommand("eval", "evaluate checkpoints on the test split");
    std::vector<std::string> eval_ckpts;
    ev->add_option("--checkpoint", eval_ckpts, "checkpoint file(s)")->required();

    auto* rd = app.add_subcommand("render", "render a RAW file through the pipeline");
    std::string raw_path, render_preset, render_phi, render_out;
    rd->add_option("--input", raw_path, "RAW image path")->required();
    rd->add_option("--preset", render_preset, "preset name (Edit1..Edit5, ev+2)");
    rd->add_option("--phi", render_phi, "explicit edit parameters as JSON");
    rd->add_option("--out-file", render_out, "output render path");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");

    auto* se = app.add_subcommand("sample-edits", "dump sampled edit parameters as JSON");
    int sample_count = 10;
    std::string sample_out;
    se->add_option("--count", sample_count, "number of draws");
    se->add_option("--out-file", sample_out, "write JSON here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (!config_path.empty()) cli.cfg = load_runconfig(config_path);
        if (seed_flag) cli.cfg.seed = *seed_flag;

        if (fit->parsed()) return cmd_fit_luts(cli, budget_color, budget_tone);
        if (gen->parsed()) return cmd_gen_data(cli);
        if (tr->parsed()) return cmd_train(cli, loss_mode_flag, fixed_pipeline, name_flag);
        if (ft->parsed()) return cmd_finetune(cli, ckpt_path, image_id, target_name, phi_json);
        if (ev->parsed()) return cmd_eval(cli, eval_ckpts);
        if (rd->parsed()) return cmd_render(cli, raw_path, render_preset, render_phi, render_out);
        if (gc->parsed()) return cmd_gradcheck(cli);
        if (se->parsed()) return cmd_sample_edits(cli, sample_count, sample_out);
        std::fprintf(stderr, "no command\n");
        return 1;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 3;
    } catch (const StateError& e) {
        std::fprintf(stderr, "state error: %s\n", e.what());
        return 2;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return 1;
    } catch (const ArgumentError& e) {
        std::fprintf(stderr, "argument error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
