#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "editisp/errors.hpp"
#include "editisp/image.hpp"
#include "editisp/isp.hpp"
#include "editisp/losses.hpp"
#include "editisp/sampler.hpp"
#include "editisp/unet.hpp"

namespace editisp {

/// One dataset element held in memory: ground-truth RAW, its reference
/// render, and the calibration metadata.
struct TrainItem {
    RawImage x;
    SrgbImage y;
    ImageMeta meta;
};

struct TrainLogRow {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    Unet model;
    std::vector<TrainLogRow> log;
    double best_val = 0.0;
    int best_epoch = -1;
};

inline void save_train_log(const std::vector<TrainLogRow>& log, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "epoch,train_loss,val_loss,wall_seconds\n";
    char buf[128];
    for (const auto& row : log) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.3f\n", row.epoch, row.train_loss,
                      row.val_loss, row.wall_seconds);
        f << buf;
    }
    if (!f) throw IoError("write failed: " + path);
}

namespace detail {

/// Network input pair for a RAW patch: the reference render crop plus the
/// stored low-resolution RAW metadata, bilinearly upsampled back to patch
/// resolution.
struct NetInput {
    SrgbImage srgb;
    RawImage meta_up;
    RawImage x_d;
};

inline NetInput make_net_input(const RawImage& x_patch, const SrgbImage& y_patch, int factor) {
    NetInput in;
    in.x_d = downsample(x_patch, factor);
    in.meta_up = upsample_bilinear(in.x_d, factor);
    in.srgb = y_patch;
    return in;
}

inline void accumulate_grads(std::vector<ConvParams>& acc, const std::vector<ConvParams>& g) {
    if (acc.empty()) {
        acc = g;
        return;
    }
    for (std::size_t i = 0; i < acc.size(); ++i) {
        for (std::size_t j = 0; j < acc[i].w.size(); ++j) acc[i].w[j] += g[i].w[j];
        for (std::size_t j = 0; j < acc[i].b.size(); ++j) acc[i].b[j] += g[i].b[j];
    }
}

}  // namespace detail

/// When set, replaces edit sampling during training: every image is rendered
/// under the edit this returns for its metadata (the ablation with parameter
/// sampling disabled). Validation edits stay sampled so model selection is
/// identical across arms.
using FixedEditFn = std::function<EditParams(const ImageMeta&)>;

/// Trains the reconstruction model with per-image sampled edits (shared LUT
/// index per mini-batch). Model selection uses the render loss under three
/// edits fixed at startup; the weights returned are the best-validation
/// snapshot. Deterministic given (cfg, seed, dataset).
inline TrainResult train(const ModelConfig& cfg, const std::vector<TrainItem>& train_set,
                         const std::vector<TrainItem>& val_set,
                         const IlluminantDictionary& dict, const SamplerConfig& scfg,
                         const IspBank& bank, std::uint64_t seed,
                         const FixedEditFn& fixed_edit = nullptr) {
    validate_model_config(cfg);
    validate_sampler_config(scfg);
    if (train_set.empty()) throw ArgumentError("train: empty training set");
    bank.assert_frozen();

    const GaussianFit fit = fit_illuminant_gaussian(dict);
    const int factor = cfg.metadata_factor;
    const int align = std::lcm(factor, 1 << cfg.depth);
    const int budget = cfg.patch_side * cfg.patch_side;

    Rng root(seed);
    Rng init_rng = root.child(1);
    Rng val_rng = root.child(2);

    Unet net = Unet::random_init(cfg, init_rng);
    AdamState adam(net);

    // validation edits are held out: one fixed draw at startup
    std::vector<EditParams> val_edits;
    for (int i = 0; i < 3; ++i)
        val_edits.push_back(sample_edit_params(fit, dict, fit.mu, scfg, val_rng));

    auto validate = [&](const Unet& model) {
        if (val_set.empty()) return 0.0;
        double acc = 0.0;
        for (const TrainItem& item : val_set) {
            const int side = std::min({(item.x.height() / align) * align,
                                       (item.x.width() / align) * align, cfg.patch_side});
            if (side <= 0) throw ArgumentError("train: validation image smaller than grid");
            const int y0 = ((item.x.height() - side) / 2 / align) * align;
            const int x0 = ((item.x.width() - side) / 2 / align) * align;
            const RawImage x_crop = item.x.crop(y0, x0, side, side);
            const SrgbImage y_crop = item.y.crop(y0, x0, side, side);
            const detail::NetInput in = detail::make_net_input(x_crop, y_crop, factor);
            const RawImage xhat = model.forward(in.srgb, in.meta_up);
            for (const EditParams& phi : val_edits)
                acc += l_srgb(x_crop, xhat, phi, item.meta, bank).value;
        }
        return acc / (static_cast<double>(val_set.size()) * val_edits.size());
    };

    TrainResult result;
    result.best_val = std::numeric_limits<double>::infinity();
    Unet best = net;
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng epoch_rng = root.child(1000 + static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[epoch_rng.uniform_int(0, static_cast<int>(i) - 1)]);

        double epoch_loss_sum = 0.0;
        std::size_t epoch_samples = 0;
        const std::size_t n_batches =
            (train_set.size() + cfg.batch_size - 1) / cfg.batch_size;

        for (std::size_t b = 0; b < n_batches; ++b) {
            Rng batch_rng = epoch_rng.child(b + 1);
            const int rho = sample_lut_index(scfg, batch_rng);
            const std::size_t begin = b * cfg.batch_size;
            const std::size_t end = std::min(begin + cfg.batch_size, train_set.size());
            const double inv_n = 1.0 / static_cast<double>(end - begin);

            std::vector<ConvParams> grad_acc;
            double batch_loss = 0.0;
            for (std::size_t j = begin; j < end; ++j) {
                Rng img_rng = batch_rng.child(j - begin + 1);
                const TrainItem& item = train_set[order[j]];
                const PatchWindow w = random_patch_window(item.x.height(), item.x.width(),
                                                          budget, align, img_rng);
                const RawImage x_patch = item.x.crop(w.y0, w.x0, w.side, w.side);
                const SrgbImage y_patch = item.y.crop(w.y0, w.x0, w.side, w.side);
                const detail::NetInput in = detail::make_net_input(x_patch, y_patch, factor);

                UnetTape tape;
                const RawImage xhat = net.forward(in.srgb, in.meta_up, &tape);

                EditParams phi;
                if (fixed_edit) {
                    phi = fixed_edit(item.meta);
                } else {
                    phi.epsilon = sample_exposure(scfg, img_rng);
                    phi.omega = sample_illuminant(fit, dict, item.meta.asn, scfg, img_rng);
                    phi.rho = rho;
                    phi.tone_poly = sample_tone_polynomial(scfg, img_rng);
                }

                LossValue loss;
                switch (cfg.loss_mode) {
                    case LossMode::RawOnly:
                        loss = l_raw(x_patch, xhat);
                        break;
                    case LossMode::SrgbOnly:
                        loss = l_srgb(x_patch, xhat, phi, item.meta, bank);
                        break;
                    case LossMode::Combined:
                        loss = l_total(x_patch, xhat, phi, item.meta, bank, cfg.lambda);
                        break;
                }
                batch_loss += loss.value;
                for (std::size_t k = 0; k < loss.grad.size(); ++k)
                    loss.grad.data()[k] *= inv_n;
                detail::accumulate_grads(grad_acc, net.backward(tape, loss.grad));
            }
            batch_loss *= inv_n;
            if (!std::isfinite(batch_loss))
                throw NumericError("train: loss diverged at epoch " + std::to_string(epoch) +
                                   " batch " + std::to_string(b));
            epoch_loss_sum += batch_loss * static_cast<double>(end - begin);
            epoch_samples += end - begin;
            adam_step(net, grad_acc, adam, cfg.learning_rate);
        }

        TrainLogRow row;
        row.epoch = epoch;
        row.train_loss = epoch_loss_sum / static_cast<double>(epoch_samples);
        row.val_loss = validate(net);
        row.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(row);

        const double score = val_set.empty() ? row.train_loss : row.val_loss;
        if (score < result.best_val) {
            result.best_val = score;
            result.best_epoch = epoch;
            best = net;
        }
    }

    bank.assert_frozen();
    result.model = cfg.epochs > 0 ? std::move(best) : std::move(net);
    return result;
}

/// Adapts a trained model to one capture. The loss compares renders at the
/// stored metadata resolution, so only y and x_d are needed. When target_phi
/// is set, fine-tuning is directed at that edit and its low-resolution
/// render is computed once; otherwise a fresh edit is sampled per iteration.
inline Unet finetune(const Unet& model, const SrgbImage& y, const RawImage& x_d,
                     const ImageMeta& meta, const EditParams* target_phi,
                     const IlluminantDictionary& dict, const SamplerConfig& scfg,
                     const IspBank& bank, std::uint64_t seed) {
    const ModelConfig& cfg = model.config();
    const int factor = cfg.metadata_factor;
    if (y.height() != x_d.height() * factor || y.width() != x_d.width() * factor)
        throw ArgumentError("finetune: metadata resolution does not match the render");
    bank.assert_frozen();

    const GaussianFit fit = fit_illuminant_gaussian(dict);
    const int align = std::lcm(factor, 1 << cfg.depth);
    constexpr int kFtPixelBudget = 1024;

    Unet net = model;
    AdamState adam(net);
    Rng root(seed);

    SrgbImage z_d_full;
    if (target_phi) {
        validate_edit_params(*target_phi, bank.lut_count());
        z_d_full = render(x_d, *target_phi, meta, bank);
    }

    for (int it = 0; it < cfg.ft_iterations; ++it) {
        Rng iter_rng = root.child(static_cast<std::uint64_t>(it) + 1);
        const PatchWindow w =
            random_patch_window(y.height(), y.width(), kFtPixelBudget, align, iter_rng);
        const SrgbImage y_crop = y.crop(w.y0, w.x0, w.side, w.side);
        const RawImage x_d_crop =
            x_d.crop(w.y0 / factor, w.x0 / factor, w.side / factor, w.side / factor);
        const RawImage meta_up = upsample_bilinear(x_d_crop, factor);

        UnetTape tape;
        const RawImage xhat = net.forward(y_crop, meta_up, &tape);

        EditParams phi;
        SrgbImage z_d_crop;
        const SrgbImage* cache = nullptr;
        if (target_phi) {
            phi = *target_phi;
            z_d_crop = z_d_full.crop(w.y0 / factor, w.x0 / factor, w.side / factor,
                                     w.side / factor);
            cache = &z_d_crop;
        } else {
            phi = sample_edit_params(fit, dict, meta.asn, scfg, iter_rng);
        }

        const LossValue loss =
            l_srgb_ft_downsampled(x_d_crop, xhat, factor, phi, meta, bank, cache);
        if (!std::isfinite(loss.value))
            throw NumericError("finetune: loss diverged at iteration " + std::to_string(it));
        adam_step(net, net.backward(tape, loss.grad), adam, cfg.ft_learning_rate);
    }
    bank.assert_frozen();
    return net;
}

}  // namespace editisp
