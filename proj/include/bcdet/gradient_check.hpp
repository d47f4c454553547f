#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "bcdet/losses.hpp"
#include "bcdet/rng.hpp"

namespace bcdet {

/// Gradients smaller than this are compared in absolute terms.
inline constexpr double kGradientFloor = 1e-6;

inline double relative_error(double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradientFloor});
    return std::abs(analytic - numeric) / scale;
}

/// Compares `analytic` against central differences of `loss` at the given
/// parameter indices and returns the worst relative error. `params` is
/// perturbed in place and restored.
inline double finite_difference_check(const std::function<double(const Eigen::VectorXd&)>& loss,
                                      Eigen::VectorXd& params, const Eigen::VectorXd& analytic,
                                      std::span<const Eigen::Index> indices, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_check: eps must be positive");
    double worst = 0.0;
    for (const Eigen::Index k : indices) {
        const double saved = params(k);
        params(k) = saved + eps;
        const double up = loss(params);
        params(k) = saved - eps;
        const double down = loss(params);
        params(k) = saved;
        worst = std::max(worst, relative_error(analytic(k), (up - down) / (2.0 * eps)));
    }
    return worst;
}

struct GradientCheckOptions {
    double eps = 1e-5;
    int samples_per_tensor = 4;  // <= 0 checks every parameter
    std::uint64_t seed = 0;
};

/// Parameter indices to probe: a few from every tensor so each layer is
/// covered.
inline std::vector<Eigen::Index> sample_parameter_indices(const HeadParams<double>& params,
                                                          const GradientCheckOptions& opts) {
    std::vector<Eigen::Index> out;
    CounterRng rng = CounterRng::derive(opts.seed, 0x47524144ULL);
    Eigen::Index base = 0;
    params.for_each([&](std::string_view, const MatrixX<double>& m) {
        const Eigen::Index size = m.size();
        if (opts.samples_per_tensor <= 0 || size <= opts.samples_per_tensor) {
            for (Eigen::Index i = 0; i < size; ++i) out.push_back(base + i);
        } else {
            for (int i = 0; i < opts.samples_per_tensor; ++i)
                out.push_back(base + static_cast<Eigen::Index>(rng.next_u64() % static_cast<std::uint64_t>(size)));
        }
        base += size;
    });
    return out;
}

/// Analytic gradients of the total loss versus central differences. The
/// confidence mask is frozen at the unperturbed weights.
inline double gradient_check(const HeadWeights<double>& weights, std::span<const TrainingSample* const> batch,
                             const LossHyper& hyper, const GradientCheckOptions& opts = {}) {
    if (!(opts.eps > 0.0)) throw std::invalid_argument("gradient_check: eps must be positive");
    HeadWeights<double> w = weights;
    w.zero_grad();
    const LossEvaluation reference = batch_loss(w, batch, hyper, true);
    const Eigen::VectorXd analytic = w.grads.flatten();
    Eigen::VectorXd theta = w.params.flatten();

    const auto loss = [&](const Eigen::VectorXd& p) {
        w.params.unflatten(p);
        return batch_loss(w, batch, hyper, false, &reference.conf_mask).parts.total;
    };
    const std::vector<Eigen::Index> indices = sample_parameter_indices(w.params, opts);
    return finite_difference_check(loss, theta, analytic, indices, opts.eps);
}

}  // namespace bcdet
