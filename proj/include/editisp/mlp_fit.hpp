#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <vector>

#include "editisp/lut.hpp"
#include "editisp/mlp.hpp"
#include "editisp/rng.hpp"

namespace editisp {

struct FitReport {
    double max_err = 0.0;   // held-out max-abs channel error
    double mean_err = 0.0;  // held-out mean-abs channel error
    int iterations = 0;
    bool passed = false;
    double tolerance = 0.0;
    double seconds = 0.0;
};

inline constexpr double kColorFitTolerance = 2.0 / 255.0;
inline constexpr double kToneFitTolerance = 1.0 / 255.0;
inline constexpr int kDefaultColorFitBudget = 20000;
inline constexpr int kDefaultToneFitBudget = 30000;

namespace detail {

/// Adam over the MLP's parameters, flattened per layer.
class MlpAdam {
public:
    explicit MlpAdam(const Mlp& mlp) {
        for (const auto& l : mlp.layers()) {
            mw_.emplace_back(l.w.size(), 0.0);
            vw_.emplace_back(l.w.size(), 0.0);
            mb_.emplace_back(l.b.size(), 0.0);
            vb_.emplace_back(l.b.size(), 0.0);
        }
    }

    void step(Mlp& mlp, const std::vector<std::vector<double>>& dw,
              const std::vector<std::vector<double>>& db, double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(kBeta1, t_);
        const double bc2 = 1.0 - std::pow(kBeta2, t_);
        for (std::size_t li = 0; li < mlp.layers().size(); ++li) {
            auto& l = mlp.layers()[li];
            update(l.w, dw[li], mw_[li], vw_[li], lr, bc1, bc2);
            update(l.b, db[li], mb_[li], vb_[li], lr, bc1, bc2);
        }
    }

private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    static void update(std::vector<double>& p, const std::vector<double>& g,
                       std::vector<double>& m, std::vector<double>& v, double lr, double bc1,
                       double bc2) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
            v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
            p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kEps);
        }
    }

    int t_ = 0;
    std::vector<std::vector<double>> mw_, vw_, mb_, vb_;
};

struct FitTarget {
    int dim = 0;
    // evaluates the reference transform for a batch of points
    const Lut3D* lut3 = nullptr;
    const Lut1D* lut1 = nullptr;

    void eval(const double* in, std::size_t n, double* out) const {
        if (lut3) {
            for (std::size_t i = 0; i < n; ++i) {
                const Vec3 v = lut3->apply({in[i * 3], in[i * 3 + 1], in[i * 3 + 2]});
                out[i * 3] = v.r;
                out[i * 3 + 1] = v.g;
                out[i * 3 + 2] = v.b;
            }
        } else {
            for (std::size_t i = 0; i < n; ++i) out[i] = lut1->apply(in[i]);
        }
    }
};

inline Mlp fit_mlp(const FitTarget& target, const std::vector<int>& hidden, int budget,
                   double tolerance, double stop_frac, Rng& rng, FitReport& report) {
    const auto t0 = std::chrono::steady_clock::now();
    const int dim = target.dim;
    Rng init_rng = rng.child(1);
    Rng holdout_rng = rng.child(2);
    Rng batch_rng = rng.child(3);
    Rng mine_rng = rng.child(4);

    Mlp mlp(dim, hidden, dim, init_rng);

    // Frozen held-out set drawn before any training.
    const std::size_t n_hold = 100000;
    std::vector<double> hold_in(n_hold * dim), hold_ref(n_hold * dim);
    for (double& v : hold_in) v = holdout_rng.uniform01();
    target.eval(hold_in.data(), n_hold, hold_ref.data());

    const auto holdout_errors = [&](double& max_err, double& mean_err) {
        std::vector<double> out(n_hold * dim);
        mlp.forward(hold_in.data(), n_hold, out.data());
        max_err = 0.0;
        double sum = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double e = std::abs(out[i] - hold_ref[i]);
            max_err = std::max(max_err, e);
            sum += e;
        }
        mean_err = sum / static_cast<double>(out.size());
    };

    MlpAdam adam(mlp);
    const std::size_t batch = 256;
    const std::size_t n_uniform = 192;  // rest of the batch comes from the hard pool
    std::vector<double> pool;           // hard examples, n x dim
    std::vector<double> in(batch * dim), ref(batch * dim), out(batch * dim),
        grad(batch * dim);
    std::vector<std::vector<double>> dw, db;
    MlpActivations acts;

    const double lr0 = 4e-3, lr1 = 2e-4;
    int it = 0;
    bool converged = false;
    for (; it < budget && !converged; ++it) {
        // Cosine learning-rate decay.
        const double frac = static_cast<double>(it) / std::max(1, budget - 1);
        const double lr = lr1 + 0.5 * (lr0 - lr1) * (1.0 + std::cos(M_PI * frac));

        const std::size_t n_pool = pool.size() / dim;
        const std::size_t uni = n_pool == 0 ? batch : n_uniform;
        for (std::size_t i = 0; i < uni * dim; ++i) in[i] = batch_rng.uniform01();
        for (std::size_t i = uni; i < batch; ++i) {
            const std::size_t pick =
                static_cast<std::size_t>(batch_rng.uniform_int(0, static_cast<int>(n_pool) - 1));
            for (int c = 0; c < dim; ++c) in[i * dim + c] = pool[pick * dim + c];
        }
        target.eval(in.data(), batch, ref.data());
        mlp.forward(in.data(), batch, out.data(), &acts);
        for (std::size_t i = 0; i < batch * dim; ++i)
            grad[i] = 2.0 * (out[i] - ref[i]) / static_cast<double>(batch * dim);
        mlp.backward_params(in.data(), acts, grad.data(), batch, dw, db);
        adam.step(mlp, dw, db, lr);

        // Periodically refresh the hard pool and check for early success.
        if ((it + 1) % 1000 == 0) {
            const std::size_t scan = 8192;
            std::vector<double> sin(scan * dim), sref(scan * dim), sout(scan * dim);
            for (double& v : sin) v = mine_rng.uniform01();
            target.eval(sin.data(), scan, sref.data());
            mlp.forward(sin.data(), scan, sout.data());
            std::vector<std::pair<double, std::size_t>> scored(scan);
            for (std::size_t i = 0; i < scan; ++i) {
                double e = 0.0;
                for (int c = 0; c < dim; ++c)
                    e = std::max(e, std::abs(sout[i * dim + c] - sref[i * dim + c]));
                scored[i] = {e, i};
            }
            std::partial_sort(scored.begin(), scored.begin() + 1024, scored.end(),
                              [](const auto& a, const auto& b) { return a.first > b.first; });
            pool.assign(1024 * dim, 0.0);
            for (std::size_t i = 0; i < 1024; ++i)
                for (int c = 0; c < dim; ++c)
                    pool[i * dim + c] = sin[scored[i].second * dim + c];

            double max_err, mean_err;
            holdout_errors(max_err, mean_err);
            if (max_err <= stop_frac * tolerance) converged = true;
        }
    }

    holdout_errors(report.max_err, report.mean_err);
    report.iterations = it;
    report.tolerance = tolerance;
    report.passed = report.max_err <= tolerance;
    report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return mlp;
}

}  // namespace detail

/// Fit a 3-in/3-out MLP to the trilinear LUT by MSE on uniform cube samples.
/// Stops early once the frozen held-out max error clears tolerance.
inline Mlp fit_mlp_to_lut3d(const Lut3D& lut, const std::vector<int>& hidden, int budget,
                            Rng& rng, FitReport& report) {
    detail::FitTarget target;
    target.dim = 3;
    target.lut3 = &lut;
    return detail::fit_mlp(target, hidden, budget, kColorFitTolerance, 0.8, rng, report);
}

/// 1-D analogue for tone curves, tolerance 1/255.
inline Mlp fit_mlp_to_tonecurve(const Lut1D& curve, const std::vector<int>& hidden, int budget,
                                Rng& rng, FitReport& report) {
    detail::FitTarget target;
    target.dim = 1;
    target.lut1 = &curve;
    // Tighter internal target: downstream checks also need the fitted curve
    // to stay grid-monotone, and residual ripple scales with fit error.
    return detail::fit_mlp(target, hidden, budget, kToneFitTolerance, 0.5, rng, report);
}

inline std::vector<int> default_color_arch() { return {64, 64, 64}; }
inline std::vector<int> default_tone_arch() { return {48, 48}; }

}  // namespace editisp
