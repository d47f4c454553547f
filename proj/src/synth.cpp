#include "bcdet/synth.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "bcdet/rng.hpp"

namespace bcdet {

namespace {

constexpr std::uint64_t kTemplateStream = 0x54454D504CULL;
constexpr int kPlacementAttempts = 64;

double mean_log_uniform(double lo, double hi) {
    if (hi <= lo) return lo;
    return (hi - lo) / std::log(hi / lo);
}

Eigen::VectorXd unit_gaussian(CounterRng& rng, int dim) {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v(i) = rng.normal();
    return v / v.norm();
}

}  // namespace

void SynthConfig::validate() const {
    labels.validate();
    if (num_sequences < 0) throw std::invalid_argument("synth: num_sequences must be non-negative");
    if (sequence_length < 1) throw std::invalid_argument("synth: sequence_length must be positive");
    if (feature_dim < 1) throw std::invalid_argument("synth: feature_dim must be positive");
    if (num_levels < 1 || scale_factor < 1) throw std::invalid_argument("synth: invalid pyramid shape");
    if (!(frame_rate > 0.0)) throw std::invalid_argument("synth: frame_rate must be positive");
    if (density < 0.0) throw std::invalid_argument("synth: density must be non-negative");
    if (noise < 0.0) throw std::invalid_argument("synth: noise must be non-negative");
    if (overlap_probability < 0.0 || overlap_probability > 1.0)
        throw std::invalid_argument("synth: overlap_probability must lie in [0, 1]");
    if (!(min_length >= 1.0) || max_length < min_length)
        throw std::invalid_argument("synth: length range must satisfy 1 <= min_length <= max_length");
    if (max_length > sequence_length)
        throw std::invalid_argument("synth: max_length exceeds sequence_length");
    if (density > 500.0) throw std::invalid_argument("synth: density above 500 actions per sequence is unsupported");

    const double coverage = density * (1.0 - overlap_probability) * mean_log_uniform(min_length, max_length);
    if (coverage > 0.9 * sequence_length) {
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "synth: infeasible config: %.1f expected non-overlapping actions of mean length %.2f "
                      "frames cover %.0f%% of a %d-frame sequence (limit 90%%)",
                      density * (1.0 - overlap_probability), mean_log_uniform(min_length, max_length),
                      100.0 * coverage / sequence_length, sequence_length);
        throw std::invalid_argument(buf);
    }
}

Eigen::VectorXd SynthTemplates::for_label(const LabelSpace& labels, const ActionLabel& label) const {
    if (labels.compound()) return classes.col(label.primary) + classes.col(labels.task_offset(1) + label.secondary);
    return classes.col(label.primary);
}

SynthTemplates make_templates(const SynthConfig& cfg) {
    CounterRng rng = CounterRng::derive(cfg.template_seed, kTemplateStream);
    SynthTemplates t;
    const int classes = cfg.labels.total_classes();
    t.classes.resize(cfg.feature_dim, classes);
    for (int c = 0; c < classes; ++c) t.classes.col(c) = unit_gaussian(rng, cfg.feature_dim);
    t.start_bump = unit_gaussian(rng, cfg.feature_dim);
    t.end_bump = unit_gaussian(rng, cfg.feature_dim);
    return t;
}

Eigen::MatrixXd downsample_mean(const Eigen::MatrixXd& level, int factor) {
    const Eigen::Index n = level.cols();
    const Eigen::Index m = (n + factor - 1) / factor;
    Eigen::MatrixXd out(level.rows(), m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const Eigen::Index begin = i * factor;
        const Eigen::Index count = std::min<Eigen::Index>(factor, n - begin);
        out.col(i) = level.middleCols(begin, count).rowwise().sum() / static_cast<double>(count);
    }
    return out;
}

SynthSequence generate_sequence(const SynthConfig& cfg, const SynthTemplates& templates, int index) {
    CounterRng rng = CounterRng::derive(cfg.seed, static_cast<std::uint64_t>(index));
    SynthSequence seq;
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04d", index);
    seq.id = id;
    seq.length = cfg.sequence_length;

    const int count = cfg.fixed_count ? static_cast<int>(std::lround(cfg.density)) : rng.poisson(cfg.density);
    const double log_lo = std::log(cfg.min_length);
    const double log_hi = std::log(cfg.max_length);
    for (int k = 0; k < count; ++k) {
        ActionLabel label;
        label.primary = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(cfg.labels.class_counts[0]));
        if (cfg.labels.compound())
            label.secondary = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(cfg.labels.class_counts[1]));
        const bool may_overlap = rng.uniform() < cfg.overlap_probability;

        for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
            const double len = std::max(1.0, std::round(std::exp(rng.uniform(log_lo, log_hi))));
            const double slots = static_cast<double>(cfg.sequence_length) - len + 1.0;
            const double start = std::floor(rng.uniform() * slots);
            const Interval iv{start, start + len};
            bool clash = false;
            if (!may_overlap)
                for (const auto& s : seq.segments) clash = clash || intersection_length(s.interval, iv) > 0.0;
            if (clash) continue;
            seq.segments.push_back(label.compound() ? GroundTruthSegment::verb_noun(iv, label.primary, label.secondary)
                                                    : GroundTruthSegment::single(iv, label.primary));
            break;
        }
    }

    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(cfg.feature_dim, cfg.sequence_length);
    const double reach = 3.0 * cfg.bump_width;
    for (const auto& s : seq.segments) {
        const auto begin = static_cast<Eigen::Index>(s.interval.start);
        const auto end = static_cast<Eigen::Index>(s.interval.end);
        x.middleCols(begin, end - begin).colwise() += templates.for_label(cfg.labels, s.label());
        if (cfg.bump_width <= 0.0 || cfg.bump_amplitude == 0.0) continue;
        // start bump on frames just before the action, end bump just after it
        for (Eigen::Index j = begin - 1; j >= 0 && s.interval.start - (j + 0.5) <= reach; --j) {
            const double d = (s.interval.start - (j + 0.5)) / cfg.bump_width;
            x.col(j) += cfg.bump_amplitude * std::exp(-0.5 * d * d) * templates.start_bump;
        }
        for (Eigen::Index j = end; j < cfg.sequence_length && (j + 0.5) - s.interval.end <= reach; ++j) {
            const double d = ((j + 0.5) - s.interval.end) / cfg.bump_width;
            x.col(j) += cfg.bump_amplitude * std::exp(-0.5 * d * d) * templates.end_bump;
        }
    }
    if (cfg.noise > 0.0)
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) += cfg.noise * rng.normal();

    seq.features.scale_factor = cfg.scale_factor;
    seq.features.levels.push_back(std::move(x));
    for (int l = 1; l < cfg.num_levels; ++l)
        seq.features.levels.push_back(downsample_mean(seq.features.levels.back(), cfg.scale_factor));
    return seq;
}

SynthDataset generate_dataset(const SynthConfig& cfg) {
    cfg.validate();
    SynthDataset ds;
    ds.labels = cfg.labels;
    ds.frame_rate = cfg.frame_rate;
    const SynthTemplates templates = make_templates(cfg);
    ds.sequences.reserve(static_cast<std::size_t>(cfg.num_sequences));
    for (int i = 0; i < cfg.num_sequences; ++i) ds.sequences.push_back(generate_sequence(cfg, templates, i));
    return ds;
}

}  // namespace bcdet
