#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcdet/losses.hpp"
#include "bcdet/rng.hpp"

namespace bcdet {

struct TrainOptions {
    int steps = 500;
    double learning_rate = 0.01;
    double momentum = 0.9;
    int batch_size = 4;
    std::uint64_t seed = 0;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(int step, const std::string& what)
        : std::runtime_error("training diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

/// Heavy-ball gradient descent: v <- mu v + g, theta <- theta - lr v.
class MomentumSgd {
public:
    MomentumSgd(double learning_rate, double momentum) : lr_(learning_rate), mu_(momentum) {}

    void step(HeadWeights<double>& w) {
        const Eigen::VectorXd g = w.grads.flatten();
        if (velocity_.size() != g.size()) velocity_ = Eigen::VectorXd::Zero(g.size());
        velocity_ = mu_ * velocity_ + g;
        w.params.unflatten(w.params.flatten() - lr_ * velocity_);
    }

private:
    double lr_;
    double mu_;
    Eigen::VectorXd velocity_;
};

/// Epoch-wise Fisher-Yates order drawn from the counter-based generator.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    CounterRng rng = CounterRng::derive(seed, 0x45504F4348ULL + epoch);
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

/// Runs one optimizer step on `batch` and returns its loss.
inline LossBreakdown train_step(HeadWeights<double>& w, MomentumSgd& opt,
                                std::span<const TrainingSample* const> batch, const LossHyper& hyper) {
    w.zero_grad();
    const LossEvaluation eval = batch_loss(w, batch, hyper, true);
    opt.step(w);
    return eval.parts;
}

struct TrainResult {
    HeadWeights<double> weights;
    std::vector<LossBreakdown> trace;
};

using StepCallback = std::function<void(int step, const LossBreakdown&)>;

/// Fixed-length training. Batches walk a seeded per-epoch permutation of the
/// dataset; a non-finite loss aborts with the offending step.
inline TrainResult train_loop(HeadWeights<double> w, std::span<const TrainingSample> dataset, const LossHyper& hyper,
                              const TrainOptions& opts, const StepCallback& on_step = {}) {
    if (dataset.empty()) throw std::invalid_argument("train_loop: empty dataset");
    if (opts.steps < 0 || opts.batch_size < 1) throw std::invalid_argument("train_loop: invalid step count or batch size");

    MomentumSgd opt(opts.learning_rate, opts.momentum);
    TrainResult result;
    result.trace.reserve(static_cast<std::size_t>(opts.steps));

    const std::size_t n = dataset.size();
    const std::size_t batch_size = std::min<std::size_t>(static_cast<std::size_t>(opts.batch_size), n);
    std::vector<std::size_t> order;
    std::uint64_t epoch = 0;
    std::size_t cursor = n;  // forces a fresh permutation on the first step
    std::vector<const TrainingSample*> batch;

    for (int step = 1; step <= opts.steps; ++step) {
        batch.clear();
        while (batch.size() < batch_size) {
            if (cursor >= n) {
                order = epoch_order(n, opts.seed, epoch++);
                cursor = 0;
            }
            batch.push_back(&dataset[order[cursor++]]);
        }
        const LossBreakdown parts = train_step(w, opt, batch, hyper);
        if (!std::isfinite(parts.total)) throw TrainingDiverged(step, "non-finite total loss");
        if (!w.params.flatten().allFinite()) throw TrainingDiverged(step, "non-finite weights");
        result.trace.push_back(parts);
        if (on_step) on_step(step, parts);
    }
    result.weights = std::move(w);
    return result;
}

}  // namespace bcdet
