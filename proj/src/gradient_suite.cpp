#include "bcdet/gradient_suite.hpp"

#include <algorithm>

namespace bcdet {

RandomInstance make_random_instance(std::uint64_t seed, int alpha) {
    CounterRng rng = CounterRng::derive(seed, 0x494E5354ULL);
    const auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(hi - lo + 1)); };

    HeadConfig cfg;
    cfg.input_dim = pick(2, 6);
    cfg.hidden = pick(4, 8);
    if (rng.uniform() < 0.5)
        cfg.labels.class_counts = {pick(1, 4)};
    else
        cfg.labels.class_counts = {pick(1, 2), pick(1, 2)};
    cfg.sigma = rng.uniform(2.0, 6.0);
    cfg.confidence = rng.uniform() < 0.25 ? ConfidenceMode::direct : ConfidenceMode::scaled;

    const int levels = pick(1, 2);
    const int length = pick(12, 32);
    const int num_samples = pick(1, 2);

    RandomInstance inst;
    inst.weights = init_head_weights<double>(cfg, seed);
    inst.weights.params.for_each([&](std::string_view name, MatrixX<double>& m) {
        if (!name.ends_with(".bias")) return;
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 0.5 * rng.normal();
    });
    // start the offsets near typical target distances so some predictions clear beta
    for (Eigen::Index i = 0; i < 2; ++i) inst.weights.params.offset_top.bias(i, 0) = rng.uniform(2.0, 5.0);

    for (int s = 0; s < num_samples; ++s) {
        TrainingSample sample;
        sample.features.scale_factor = 2;
        Eigen::MatrixXd x(cfg.input_dim, length);
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = rng.normal();
        sample.features.levels.push_back(x);
        for (int l = 1; l < levels; ++l) {
            const Eigen::MatrixXd& prev = sample.features.levels.back();
            Eigen::MatrixXd next((prev.rows()), (prev.cols() + 1) / 2);
            for (Eigen::Index j = 0; j < next.cols(); ++j) {
                const Eigen::Index b = 2 * j;
                const Eigen::Index c = std::min<Eigen::Index>(2, prev.cols() - b);
                next.col(j) = prev.middleCols(b, c).rowwise().mean();
            }
            sample.features.levels.push_back(std::move(next));
        }
        sample.locations = sample.features.locations();

        std::vector<GroundTruthSegment> segments;
        const int num_segments = pick(1, 3);
        for (int k = 0; k < num_segments; ++k) {
            const double len = rng.uniform(6.0, std::min(16.0, static_cast<double>(length) - 1.0));
            const double start = rng.uniform(0.0, static_cast<double>(length) - len);
            const Interval iv{start, start + len};
            if (cfg.labels.compound())
                segments.push_back(GroundTruthSegment::verb_noun(iv, pick(0, cfg.labels.class_counts[0] - 1),
                                                                 pick(0, cfg.labels.class_counts[1] - 1)));
            else
                segments.push_back(GroundTruthSegment::single(iv, pick(0, cfg.labels.class_counts[0] - 1)));
        }
        sample.targets = assign_targets(sample.locations, segments, cfg.labels, alpha);
        inst.samples.push_back(std::move(sample));
    }
    return inst;
}

GradientSuiteResult run_gradient_suite(std::uint64_t seed, int count, const LossHyper& hyper,
                                       const GradientCheckOptions& opts) {
    GradientSuiteResult result;
    for (int i = 0; i < count; ++i) {
        const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
        RandomInstance inst = make_random_instance(s);
        const auto batch = inst.batch();
        GradientCheckOptions o = opts;
        o.seed = s;
        const double err = gradient_check(inst.weights, batch, hyper, o);

        HeadWeights<double> probe = inst.weights;
        if (batch_loss(probe, batch, hyper, false).parts.num_conf > 0) ++result.instances_with_conf;
        if (err > result.worst || i == 0) {
            result.worst = std::max(result.worst, err);
            result.worst_seed = s;
        }
        ++result.instances;
    }
    return result;
}

}  // namespace bcdet
