#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "editisp/datasynth.hpp"
#include "editisp/evalreport.hpp"
#include "editisp/metrics.hpp"
#include "editisp/presets.hpp"
#include "helpers.hpp"

using namespace editisp;
using namespace editisp::testutil;

namespace {

namespace fs = std::filesystem;

SrgbImage constant_srgb(int h, int w, double r, double g, double b) {
    SrgbImage img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            img.at(y, x, 0) = r;
            img.at(y, x, 1) = g;
            img.at(y, x, 2) = b;
        }
    return img;
}

SrgbImage random_srgb(int h, int w, Rng& rng) {
    SrgbImage img(h, w);
    for (std::size_t k = 0; k < img.size(); ++k) img.data()[k] = rng.uniform01();
    return img;
}

// Scalar CIE76 pipeline rewritten from the definitions, kept separate from
// the library conversion path.
std::array<double, 3> oracle_lab(double r, double g, double b) {
    const double lr = std::pow(r, 2.2), lg = std::pow(g, 2.2), lb = std::pow(b, 2.2);
    const Mat3& m = color::srgb_to_xyz();
    const double x = m(0, 0) * lr + m(0, 1) * lg + m(0, 2) * lb;
    const double y = m(1, 0) * lr + m(1, 1) * lg + m(1, 2) * lb;
    const double z = m(2, 0) * lr + m(2, 1) * lg + m(2, 2) * lb;
    const Vec3 wn = color::d65_white_xyz();
    auto f = [](double t) {
        const double d = 6.0 / 29.0;
        return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
    };
    const double fx = f(x / wn.r), fy = f(y / wn.g), fz = f(z / wn.b);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

}  // namespace

TEST(Psnr, CapConstantsAndOracle) {
    Rng rng(61);
    SrgbImage a = random_srgb(12, 9, rng);
    EXPECT_EQ(100.0, psnr(a, a));

    SrgbImage lo = constant_srgb(8, 8, 0.4, 0.4, 0.4);
    SrgbImage hi = constant_srgb(8, 8, 0.5, 0.5, 0.5);
    EXPECT_NEAR(20.0, psnr(lo, hi), 1e-12);
    EXPECT_DOUBLE_EQ(psnr(lo, hi), psnr(hi, lo));

    SrgbImage b = random_srgb(12, 9, rng);
    double se = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a.data()[k] - b.data()[k];
        se += d * d;
    }
    const double expect = 10.0 * std::log10(a.size() / se);
    EXPECT_NEAR(expect, psnr(a, b), 1e-9);

    SrgbImage other(12, 10);
    EXPECT_THROW(psnr(a, other), ArgumentError);
}

TEST(Ssim, IdentityMismatchAndOracle) {
    Rng rng(62);
    SrgbImage a = random_srgb(16, 11, rng);
    EXPECT_DOUBLE_EQ(1.0, ssim(a, a));

    SrgbImage inv(16, 11);
    for (std::size_t k = 0; k < a.size(); ++k) inv.data()[k] = 1.0 - a.data()[k];
    EXPECT_LT(ssim(a, inv), 1.0);

    SrgbImage b = random_srgb(16, 11, rng);
    const double got = ssim(a, b);
    EXPECT_DOUBLE_EQ(got, ssim(b, a));
    EXPECT_GE(got, -1.0);
    EXPECT_LE(got, 1.0);

    // Windowed-statistics oracle: explicit two-pass means and moments.
    const double c1 = 1e-4, c2 = 9e-4;
    double total = 0.0;
    int count = 0;
    for (int c = 0; c < 3; ++c)
        for (int y0 = 0; y0 + 8 <= 16; ++y0)
            for (int x0 = 0; x0 + 8 <= 11; ++x0) {
                double ma = 0.0, mb = 0.0;
                for (int y = y0; y < y0 + 8; ++y)
                    for (int x = x0; x < x0 + 8; ++x) {
                        ma += a.at(y, x, c);
                        mb += b.at(y, x, c);
                    }
                ma /= 64.0;
                mb /= 64.0;
                double va = 0.0, vb = 0.0, cov = 0.0;
                for (int y = y0; y < y0 + 8; ++y)
                    for (int x = x0; x < x0 + 8; ++x) {
                        va += (a.at(y, x, c) - ma) * (a.at(y, x, c) - ma);
                        vb += (b.at(y, x, c) - mb) * (b.at(y, x, c) - mb);
                        cov += (a.at(y, x, c) - ma) * (b.at(y, x, c) - mb);
                    }
                va /= 64.0;
                vb /= 64.0;
                cov /= 64.0;
                total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) /
                         ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
    EXPECT_NEAR(total / count, got, 1e-9);

    SrgbImage tiny = random_srgb(7, 20, rng);
    EXPECT_THROW(ssim(tiny, tiny), ArgumentError);
}

TEST(DeltaE, IdentityKnownPatchesAndMean) {
    Rng rng(63);
    SrgbImage a = random_srgb(9, 9, rng);
    EXPECT_DOUBLE_EQ(0.0, delta_e(a, a));

    // sRGB white against 18% gray: the display value whose linear intensity
    // is 0.18 under the 2.2 transfer.
    const double gray = std::pow(0.18, 1.0 / 2.2);
    SrgbImage white = constant_srgb(4, 4, 1.0, 1.0, 1.0);
    SrgbImage mid = constant_srgb(4, 4, gray, gray, gray);
    const auto lw = oracle_lab(1.0, 1.0, 1.0);
    const auto lg = oracle_lab(gray, gray, gray);
    const double expect = std::sqrt((lw[0] - lg[0]) * (lw[0] - lg[0]) +
                                    (lw[1] - lg[1]) * (lw[1] - lg[1]) +
                                    (lw[2] - lg[2]) * (lw[2] - lg[2]));
    EXPECT_NEAR(expect, delta_e(white, mid), 1e-9);
    EXPECT_GT(expect, 50.0);
    EXPECT_LT(expect, 51.0);
    EXPECT_DOUBLE_EQ(delta_e(white, mid), delta_e(mid, white));

    // Mean equals the average of per-pixel distances: glue two constant
    // halves together and compare against the two patch values.
    SrgbImage top(2, 4), bottom(2, 4);
    SrgbImage split(4, 4);
    for (int x = 0; x < 4; ++x)
        for (int c = 0; c < 3; ++c) {
            split.at(0, x, c) = split.at(1, x, c) = 1.0;
            split.at(2, x, c) = split.at(3, x, c) = gray;
        }
    EXPECT_NEAR(expect / 2.0, delta_e(split, white), 1e-9);
}

TEST(Presets, FrozenSetResolvesAndValidates) {
    const std::vector<EditPreset> presets = builtin_presets();
    ASSERT_EQ(5u, presets.size());
    const char* names[] = {"Edit1", "Edit2", "Edit3", "Edit4", "Edit5"};
    for (int i = 0; i < 5; ++i) EXPECT_EQ(names[i], presets[i].name);

    EXPECT_DOUBLE_EQ(1.5, presets[4].epsilon);
    EXPECT_DOUBLE_EQ(-0.25, presets[3].epsilon);
    EXPECT_DOUBLE_EQ(0.7, presets[1].epsilon);

    const std::vector<EditPreset> again = builtin_presets();
    for (int i = 0; i < 5; ++i) {
        EXPECT_EQ(presets[i].name, again[i].name);
        EXPECT_EQ(presets[i].epsilon, again[i].epsilon);
        EXPECT_EQ(presets[i].rho, again[i].rho);
        EXPECT_EQ(presets[i].tone_poly, again[i].tone_poly);
    }

    ImageMeta meta = srgb_native_meta();
    meta.asn = {1.1, 0.75};
    for (const EditPreset& p : presets) {
        const EditParams phi = resolve_preset(p, meta);
        EXPECT_NO_THROW(validate_edit_params(phi, 15)) << p.name;
        if (!p.shift_wb) {
            EXPECT_EQ(meta.asn.x, phi.omega.x) << p.name;
            EXPECT_EQ(meta.asn.y, phi.omega.y) << p.name;
        }
    }

    // The cool-matte edit pulls white balance toward the tungsten anchor but
    // stays inside the sampler threshold.
    const EditParams e5 = resolve_preset(presets[4], meta);
    const double moved = (e5.omega - meta.asn).norm();
    EXPECT_GT(moved, 0.0);
    EXPECT_LE(moved, 0.15);
    const double before = (meta.asn - kCstAnchorA).norm();
    const double after = (e5.omega - kCstAnchorA).norm();
    EXPECT_LT(after, before);
}

TEST(Presets, NamedFinetuneTargets) {
    ImageMeta meta = srgb_native_meta();
    meta.asn = {1.3, 0.7};
    auto ev2 = find_edit_target("ev+2", meta);
    ASSERT_TRUE(ev2.has_value());
    EXPECT_DOUBLE_EQ(2.0, ev2->epsilon);
    EXPECT_EQ(1.3, ev2->omega.x);
    EXPECT_EQ(2, ev2->rho);

    auto e4 = find_edit_target("Edit4", meta);
    ASSERT_TRUE(e4.has_value());
    EXPECT_DOUBLE_EQ(-0.25, e4->epsilon);

    EXPECT_FALSE(find_edit_target("nope", meta).has_value());
}

TEST(EvalReport, GroundTruthUpperBoundAndStructure) {
    const fs::path dir = fs::temp_directory_path() / "editisp_eval_gt";
    fs::remove_all(dir);
    Rng rng(64);
    IspBank bank = random_bank(6, rng);
    SceneConfig scfg;
    scfg.height = 32;
    scfg.width = 32;
    DatasetManifest m = build_dataset(3, 1, 2, scfg, bank, dir.string(), 4);

    ReconstructFn identity = [](const LoadedTriple& t) { return t.x; };
    EvalReport rep = evaluate_reconstruction(m, dir.string(), builtin_presets(), bank,
                                             identity, "ground-truth");

    EXPECT_EQ(2u * 6u, rep.rows.size());
    EXPECT_EQ(6u, rep.means.size());
    EXPECT_NO_THROW(validate_report(rep));
    for (const EvalRow& r : rep.rows) {
        EXPECT_EQ(100.0, r.psnr_db) << r.condition;
        EXPECT_DOUBLE_EQ(1.0, r.ssim_val) << r.condition;
        EXPECT_DOUBLE_EQ(0.0, r.delta_e_val) << r.condition;
    }
    EXPECT_EQ("presets-v1", rep.preset_version);
    EXPECT_FALSE(rep.manifest_hash.empty());
    fs::remove_all(dir);
}

TEST(EvalReport, ModelWrapperMeansAndCsvRoundTrip) {
    const fs::path dir = fs::temp_directory_path() / "editisp_eval_model";
    fs::remove_all(dir);
    Rng rng(65);
    IspBank bank = random_bank(6, rng);
    SceneConfig scfg;
    scfg.height = 32;
    scfg.width = 32;
    DatasetManifest m = build_dataset(3, 1, 2, scfg, bank, dir.string(), 5);

    ModelConfig cfg;
    cfg.base_filters = 4;
    cfg.depth = 2;
    cfg.metadata_factor = 4;
    cfg.patch_side = 16;
    Unet model = Unet::random_init(cfg, rng);
    EvalReport rep = evaluate_model(model, m, dir.string(), builtin_presets(), bank, "m0");
    EXPECT_NO_THROW(validate_report(rep));
    EXPECT_EQ(2u * 6u, rep.rows.size());

    // Means must be reproducible from the rows alone.
    for (const EvalRow& mean : rep.means) {
        double p = 0.0;
        int n = 0;
        for (const EvalRow& r : rep.rows)
            if (r.condition == mean.condition) {
                p += r.psnr_db;
                ++n;
            }
        EXPECT_NEAR(mean.psnr_db, p / n, 1e-9);
    }

    const std::string csv = (dir / "report.csv").string();
    save_report_csv(rep, csv);
    save_report_meta(rep, (dir / "report.json").string());
    const std::vector<EvalRow> rows = load_report_csv(csv);
    ASSERT_EQ(rep.rows.size() + rep.means.size(), rows.size());
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        EXPECT_EQ(rep.rows[i].image, rows[i].image);
        EXPECT_EQ(rep.rows[i].condition, rows[i].condition);
        EXPECT_DOUBLE_EQ(rep.rows[i].psnr_db, rows[i].psnr_db);
        EXPECT_DOUBLE_EQ(rep.rows[i].ssim_val, rows[i].ssim_val);
        EXPECT_DOUBLE_EQ(rep.rows[i].delta_e_val, rows[i].delta_e_val);
    }

    const nlohmann::json meta_json =
        nlohmann::json::parse(detail::read_file((dir / "report.json").string()));
    EXPECT_EQ("m0", meta_json["model_id"]);
    EXPECT_EQ(rep.manifest_hash, meta_json["manifest_hash"]);
    EXPECT_EQ(6u, meta_json["conditions"].size());

    EXPECT_THROW(evaluate_reconstruction(DatasetManifest{}, dir.string(), builtin_presets(),
                                         bank, ReconstructFn{}, "x"),
                 ArgumentError);
    fs::remove_all(dir);
}
