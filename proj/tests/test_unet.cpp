#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "editisp/unet.hpp"
#include "helpers.hpp"

using namespace editisp;
using namespace editisp::testutil;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.base_filters = 4;
    cfg.depth = 2;
    cfg.metadata_factor = 4;
    cfg.patch_side = 16;
    cfg.batch_size = 2;
    cfg.epochs = 1;
    return cfg;
}

SrgbImage random_srgb(int h, int w, Rng& rng) {
    SrgbImage img(h, w);
    for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = rng.uniform01();
    return img;
}

}  // namespace

TEST(ConvOp, MatchesBruteForceOracle) {
    Rng rng(71);
    Tensor in(2, 4, 5);
    for (auto& v : in.v) v = rng.uniform(-1, 1);
    ConvParams p(2, 3);
    for (auto& v : p.w) v = rng.uniform(-1, 1);
    for (auto& v : p.b) v = rng.uniform(-1, 1);

    Tensor out;
    detail::conv3x3_forward(in, p, out);
    ASSERT_EQ(3, out.c);
    for (int oc = 0; oc < 3; ++oc)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 5; ++x) {
                double want = p.b[oc];
                for (int ic = 0; ic < 2; ++ic)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int yy = y + ky - 1, xx = x + kx - 1;
                            if (yy < 0 || yy >= 4 || xx < 0 || xx >= 5) continue;
                            want += p.w[(static_cast<std::size_t>(oc) * 2 + ic) * 9 +
                                        ky * 3 + kx] *
                                    in.at(ic, yy, xx);
                        }
                EXPECT_NEAR(want, out.at(oc, y, x), 1e-12);
            }
}

TEST(ConvOp, BackwardMatchesHandDerivedSums) {
    Rng rng(73);
    Tensor in(1, 3, 3);
    for (auto& v : in.v) v = rng.uniform(-1, 1);
    ConvParams p(1, 1);
    for (auto& v : p.w) v = rng.uniform(-1, 1);
    p.b[0] = 0.3;

    Tensor d_out(1, 3, 3);
    for (auto& v : d_out.v) v = rng.uniform(-1, 1);

    Tensor d_in;
    ConvParams d_p;
    detail::conv3x3_backward(in, p, d_out, &d_in, d_p);

    // dW[k] = sum over output positions of grad * the input sample the tap saw
    for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
            double want = 0.0;
            for (int y = 0; y < 3; ++y)
                for (int x = 0; x < 3; ++x) {
                    const int yy = y + ky - 1, xx = x + kx - 1;
                    if (yy < 0 || yy >= 3 || xx < 0 || xx >= 3) continue;
                    want += d_out.at(0, y, x) * in.at(0, yy, xx);
                }
            EXPECT_NEAR(want, d_p.w[ky * 3 + kx], 1e-10);
        }

    double want_db = 0.0;
    for (const auto& v : d_out.v) want_db += v;
    EXPECT_NEAR(want_db, d_p.b[0], 1e-10);

    // dIn[s] = sum over output positions whose window covers s
    for (int iy = 0; iy < 3; ++iy)
        for (int ix = 0; ix < 3; ++ix) {
            double want = 0.0;
            for (int y = 0; y < 3; ++y)
                for (int x = 0; x < 3; ++x) {
                    const int ky = iy - y + 1, kx = ix - x + 1;
                    if (ky < 0 || ky > 2 || kx < 0 || kx > 2) continue;
                    want += d_out.at(0, y, x) * p.w[ky * 3 + kx];
                }
            EXPECT_NEAR(want, d_in.at(0, iy, ix), 1e-10);
        }
}

TEST(ModelForward, ZeroWeightsGiveZeroOutputAndDeterminism) {
    const ModelConfig cfg = tiny_config();
    Unet zero(cfg);
    Rng rng(79);
    SrgbImage y = random_srgb(16, 16, rng);
    RawImage meta_up = random_raw(16, 16, 0.0, 1.0, rng);
    RawImage out = zero.forward(y, meta_up);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_DOUBLE_EQ(0.0, out.data()[i]);

    Unet net = Unet::random_init(cfg, rng);
    RawImage a = net.forward(y, meta_up);
    RawImage b = net.forward(y, meta_up);
    EXPECT_EQ(0, std::memcmp(a.data(), b.data(), a.size() * sizeof(double)));

    RawImage wrong(8, 16);
    EXPECT_THROW(net.forward(y, wrong), ArgumentError);
    SrgbImage odd(10, 10);
    RawImage odd_meta(10, 10);
    EXPECT_THROW(net.forward(odd, odd_meta), ArgumentError);
}

TEST(ModelBackward, ZeroCotangentGivesZeroGrads) {
    const ModelConfig cfg = tiny_config();
    Rng rng(83);
    Unet net = Unet::random_init(cfg, rng);
    SrgbImage y = random_srgb(16, 16, rng);
    RawImage meta_up = random_raw(16, 16, 0.0, 1.0, rng);
    UnetTape tape;
    net.forward(y, meta_up, &tape);
    RawImage zeros(16, 16);
    const std::vector<ConvParams> grads = net.backward(tape, zeros);
    for (const auto& g : grads) {
        for (double v : g.w) EXPECT_DOUBLE_EQ(0.0, v);
        for (double v : g.b) EXPECT_DOUBLE_EQ(0.0, v);
    }
}

TEST(ModelBackward, WeightGradientsMatchFiniteDifferences) {
    const ModelConfig cfg = tiny_config();
    Rng rng(89);
    Unet net = Unet::random_init(cfg, rng);
    SrgbImage y = random_srgb(16, 16, rng);
    RawImage meta_up = random_raw(16, 16, 0.0, 1.0, rng);
    SrgbImage g(16, 16);
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = rng.uniform(-1, 1);

    UnetTape tape;
    net.forward(y, meta_up, &tape);
    RawImage cot(16, 16);
    for (std::size_t i = 0; i < cot.size(); ++i) cot.data()[i] = g.data()[i];
    const std::vector<ConvParams> grads = net.backward(tape, cot);

    auto scalar_loss = [&](const Unet& m) {
        RawImage out = m.forward(y, meta_up);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += g.data()[i] * out.data()[i];
        return acc;
    };

    const double h = 1e-5;
    double worst = 0.0;
    std::vector<ConvParams*> layers = net.all_layers();
    for (int trial = 0; trial < 20; ++trial) {
        const int li = rng.uniform_int(0, static_cast<int>(layers.size()) - 1);
        const bool bias = rng.uniform01() < 0.2;
        std::vector<double>& vec = bias ? layers[li]->b : layers[li]->w;
        const int wi = rng.uniform_int(0, static_cast<int>(vec.size()) - 1);
        const double saved = vec[wi];
        vec[wi] = saved + h;
        const double up = scalar_loss(net);
        vec[wi] = saved - h;
        const double dn = scalar_loss(net);
        vec[wi] = saved;
        const double fd = (up - dn) / (2 * h);
        const double got = bias ? grads[li].b[wi] : grads[li].w[wi];
        worst = std::max(worst, std::abs(got - fd) / std::max(std::abs(fd), 1e-8));
    }
    EXPECT_LT(worst, 1e-3);
}

TEST(ModelBackward, InputGradientMatchesFiniteDifferences) {
    const ModelConfig cfg = tiny_config();
    Rng rng(97);
    Unet net = Unet::random_init(cfg, rng);
    SrgbImage y = random_srgb(16, 16, rng);
    RawImage meta_up = random_raw(16, 16, 0.0, 1.0, rng);
    SrgbImage g(16, 16);
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = rng.uniform(-1, 1);

    UnetTape tape;
    net.forward(y, meta_up, &tape);
    RawImage cot(16, 16);
    for (std::size_t i = 0; i < cot.size(); ++i) cot.data()[i] = g.data()[i];
    Tensor grad_in;
    net.backward(tape, cot, &grad_in);
    ASSERT_EQ(6, grad_in.c);

    // directional derivative against <J^T g, v>
    Tensor v(6, 16, 16);
    for (auto& x : v.v) x = rng.uniform(-1, 1);
    double want = 0.0;
    for (std::size_t i = 0; i < v.v.size(); ++i) want += grad_in.v[i] * v.v[i];

    auto perturbed = [&](double h) {
        SrgbImage yp = y;
        RawImage mp = meta_up;
        for (int yy = 0; yy < 16; ++yy)
            for (int xx = 0; xx < 16; ++xx)
                for (int c = 0; c < 3; ++c) {
                    yp.at(yy, xx, c) += h * v.at(c, yy, xx);
                    mp.at(yy, xx, c) += h * v.at(c + 3, yy, xx);
                }
        RawImage out = net.forward(yp, mp);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += g.data()[i] * out.data()[i];
        return acc;
    };
    const double h = 1e-5;
    const double fd = (perturbed(h) - perturbed(-h)) / (2 * h);
    EXPECT_LT(std::abs(want - fd) / std::max(std::abs(fd), 1e-8), 1e-4);
}

TEST(ModelBackward, StaleTapeThrows) {
    const ModelConfig cfg = tiny_config();
    Rng rng(101);
    Unet net = Unet::random_init(cfg, rng);
    UnetTape empty;
    RawImage gz(16, 16);
    EXPECT_THROW(net.backward(empty, gz), StateError);

    SrgbImage y = random_srgb(16, 16, rng);
    RawImage meta_up = random_raw(16, 16, 0.0, 1.0, rng);
    UnetTape tape;
    net.forward(y, meta_up, &tape);
    RawImage wrong(8, 8);
    EXPECT_THROW(net.backward(tape, wrong), StateError);
}

TEST(AdamOptimizer, ZeroGradNoOpAndClosedFormFirstStep) {
    const ModelConfig cfg = tiny_config();
    Rng rng(103);
    Unet net = Unet::random_init(cfg, rng);
    AdamState state(net);

    std::vector<ConvParams> zero_grads;
    for (const ConvParams* p : net.all_layers()) zero_grads.emplace_back(p->in_c, p->out_c);
    const std::vector<double> before = net.all_layers()[0]->w;
    adam_step(net, zero_grads, state, 1e-3);
    EXPECT_EQ(1, state.step);
    EXPECT_EQ(before, net.all_layers()[0]->w);

    // t=1: update = lr * g / (|g| + eps) exactly
    Unet net2 = Unet::random_init(cfg, rng);
    AdamState s2(net2);
    std::vector<ConvParams> grads;
    Rng grng(105);
    for (const ConvParams* p : net2.all_layers()) {
        ConvParams g(p->in_c, p->out_c);
        for (auto& x : g.w) x = grng.uniform(-1, 1);
        for (auto& x : g.b) x = grng.uniform(-1, 1);
        grads.push_back(std::move(g));
    }
    const std::vector<double> w0 = net2.all_layers()[2]->w;
    const std::vector<double> g0 = grads[2].w;
    adam_step(net2, grads, s2, 1e-3);
    const std::vector<double>& w1 = net2.all_layers()[2]->w;
    for (std::size_t i = 0; i < w0.size(); ++i) {
        const double want = w0[i] - 1e-3 * g0[i] / (std::abs(g0[i]) + 1e-8);
        EXPECT_NEAR(want, w1[i], 1e-12);
    }
}

TEST(AdamOptimizer, TrajectoryMatchesScalarOracle) {
    ModelConfig cfg = tiny_config();
    cfg.base_filters = 1;
    cfg.depth = 1;
    cfg.patch_side = 4;
    cfg.metadata_factor = 2;
    Unet net(cfg);
    AdamState state(net);

    // independent scalar Adam tracking one weight
    double theta = 0.0, m = 0.0, v = 0.0;
    const double lr = 0.01;
    Rng rng(107);
    for (int t = 1; t <= 50; ++t) {
        const double g = rng.uniform(-1, 1);
        std::vector<ConvParams> grads;
        for (const ConvParams* p : net.all_layers()) {
            ConvParams gp(p->in_c, p->out_c);
            gp.w[0] = g;  // only the first tap of each layer gets gradient
            grads.push_back(std::move(gp));
        }
        adam_step(net, grads, state, lr);

        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1.0 - std::pow(0.9, t));
        const double vh = v / (1.0 - std::pow(0.999, t));
        theta -= lr * mh / (std::sqrt(vh) + 1e-8);
        EXPECT_NEAR(theta, net.all_layers()[0]->w[0], 1e-12) << "step " << t;
    }
}

TEST(Checkpoint, RoundTripAndCorruptionDetection) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "editisp_rnet_test";
    fs::create_directories(dir);
    const std::string path = (dir / "model.rnet").string();

    const ModelConfig cfg = tiny_config();
    Rng rng(109);
    Unet net = Unet::random_init(cfg, rng);
    net.save(path);
    Unet back = Unet::load(path);

    EXPECT_EQ(cfg.base_filters, back.config().base_filters);
    EXPECT_EQ(cfg.depth, back.config().depth);
    EXPECT_EQ(cfg.metadata_factor, back.config().metadata_factor);
    EXPECT_EQ(cfg.loss_mode, back.config().loss_mode);
    EXPECT_DOUBLE_EQ(cfg.lambda, back.config().lambda);
    auto a = net.all_layers();
    auto b = back.all_layers();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i]->w, b[i]->w);
        EXPECT_EQ(a[i]->b, b[i]->b);
    }

    // same weights, same forward
    SrgbImage y = random_srgb(16, 16, rng);
    RawImage meta_up = random_raw(16, 16, 0.0, 1.0, rng);
    RawImage oa = net.forward(y, meta_up);
    RawImage ob = back.forward(y, meta_up);
    EXPECT_EQ(0, std::memcmp(oa.data(), ob.data(), oa.size() * sizeof(double)));

    // corruption cases
    std::string bytes;
    {
        std::ifstream in(path, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    {
        std::string bad = bytes;
        bad[0] = 'X';
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
        out.close();
        EXPECT_THROW(Unet::load(path), FormatError);
    }
    {
        std::string bad = bytes.substr(0, bytes.size() - 9);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
        out.close();
        EXPECT_THROW(Unet::load(path), CorruptFileError);
    }
    {
        std::string bad = bytes + "xx";
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
        out.close();
        EXPECT_THROW(Unet::load(path), CorruptFileError);
    }
    fs::remove_all(dir);
}

TEST(ModelConfigValidation, RejectsIndivisiblePatch) {
    ModelConfig cfg = tiny_config();
    cfg.patch_side = 18;  // divisible by neither metadata_factor nor 2^depth
    EXPECT_THROW(validate_model_config(cfg), ArgumentError);
    cfg = tiny_config();
    cfg.metadata_factor = 5;
    EXPECT_THROW(validate_model_config(cfg), ArgumentError);
    cfg = tiny_config();
    cfg.lambda = -0.5;
    EXPECT_THROW(validate_model_config(cfg), ArgumentError);
}
