#pragma once

#include <cstdint>
#include <vector>

#include "bcdet/gradient_check.hpp"

namespace bcdet {

/// A small random training problem: 1-2 levels, at most 32 level-0
/// locations, at most 4 classes, and weights drawn so that some predictions
/// pass the confidence GIoU threshold.
struct RandomInstance {
    HeadWeights<double> weights;
    std::vector<TrainingSample> samples;

    std::vector<const TrainingSample*> batch() const {
        std::vector<const TrainingSample*> out;
        for (const auto& s : samples) out.push_back(&s);
        return out;
    }
};

RandomInstance make_random_instance(std::uint64_t seed, int alpha = 3);

struct GradientSuiteResult {
    double worst = 0.0;
    std::uint64_t worst_seed = 0;
    int instances = 0;
    int instances_with_conf = 0;  // instances whose confidence mask is non-empty
};

/// Gradient check over `count` instances seeded seed, seed+1, ...
GradientSuiteResult run_gradient_suite(std::uint64_t seed, int count, const LossHyper& hyper,
                                       const GradientCheckOptions& opts = {});

}  // namespace bcdet
