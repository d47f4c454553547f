#include "bcdet/decode.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bcdet {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr std::array<std::string_view, 7> kFusionNames{"boundary_only", "cls_only", "cls_start",  "cls_end",
                                                       "mean3",         "product3", "cls_sqrt_se"};

/// Indices of the k largest values, ties to the lower index.
std::vector<int> top_indices(std::span<const double> values, int k) {
    std::vector<int> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(b)];
    });
    idx.resize(static_cast<std::size_t>(std::min<int>(k, static_cast<int>(idx.size()))));
    return idx;
}

}  // namespace

std::string_view to_string(FusionMode mode) { return kFusionNames[static_cast<std::size_t>(mode)]; }

FusionMode parse_fusion_mode(std::string_view name) {
    for (std::size_t i = 0; i < kFusionNames.size(); ++i)
        if (kFusionNames[i] == name) return kAllFusionModes[i];
    throw std::invalid_argument("unknown fusion mode '" + std::string(name) + "'");
}

double fuse_scores(FusionMode mode, double p_a, double p_s, double p_e) {
    switch (mode) {
        case FusionMode::boundary_only: return p_s * p_e;
        case FusionMode::cls_only: return p_a;
        case FusionMode::cls_start: return p_a * p_s;
        case FusionMode::cls_end: return p_a * p_e;
        case FusionMode::mean3: return (p_a + p_s + p_e) / 3.0;
        case FusionMode::product3: return p_a * p_s * p_e;
        case FusionMode::cls_sqrt_se: return p_a * std::sqrt(p_s * p_e);
    }
    throw std::invalid_argument("unknown fusion mode");
}

std::vector<VerbNounCandidate> combine_multitask(std::span<const double> verb_logits,
                                                 std::span<const double> noun_logits, int v, int n) {
    if (v < 1 || n < 1 || v > static_cast<int>(verb_logits.size()) || n > static_cast<int>(noun_logits.size()))
        throw std::invalid_argument("combine_multitask: top-v/top-n out of range");
    const std::vector<int> verbs = top_indices(verb_logits, v);
    const std::vector<int> nouns = top_indices(noun_logits, n);
    std::vector<VerbNounCandidate> out;
    out.reserve(verbs.size() * nouns.size());
    for (int vi : verbs) {
        const double pv = sigmoid(verb_logits[static_cast<std::size_t>(vi)]);
        for (int ni : nouns) out.push_back({vi, ni, pv * sigmoid(noun_logits[static_cast<std::size_t>(ni)])});
    }
    return out;
}

std::vector<Proposal> soft_nms(std::vector<Proposal> proposals, const SoftNmsOptions& opts) {
    if (!(opts.decay_sigma > 0.0)) throw std::invalid_argument("soft_nms: decay_sigma must be positive");
    std::vector<Proposal> kept;
    std::vector<std::uint8_t> alive(proposals.size(), 1);
    std::size_t remaining = proposals.size();
    for (std::size_t i = 0; i < proposals.size(); ++i)
        if (proposals[i].score < opts.score_floor) {
            alive[i] = 0;
            --remaining;
        }
    const auto max_keep = static_cast<std::size_t>(std::max(0, opts.max_keep));

    while (remaining > 0 && kept.size() < max_keep) {
        std::size_t best = proposals.size();
        for (std::size_t i = 0; i < proposals.size(); ++i)
            if (alive[i] && (best == proposals.size() || proposals[i].score > proposals[best].score)) best = i;
        alive[best] = 0;
        --remaining;
        const Proposal& top = proposals[best];
        kept.push_back(top);
        for (std::size_t i = 0; i < proposals.size(); ++i) {
            if (!alive[i] || !(proposals[i].label == top.label)) continue;
            const double iou = tiou(top.interval, proposals[i].interval);
            proposals[i].score *= std::exp(-(iou * iou) / opts.decay_sigma);
            if (proposals[i].score < opts.score_floor) {
                alive[i] = 0;
                --remaining;
            }
        }
    }
    std::stable_sort(kept.begin(), kept.end(), [](const Proposal& a, const Proposal& b) { return a.score > b.score; });
    return kept;
}

std::vector<Proposal> decode_sequence(const HeadOutputs<double>& out, std::span<const PyramidLocation> locations,
                                      const LabelSpace& labels, double sequence_length, double frame_rate,
                                      const DecodeConfig& cfg) {
    if (static_cast<std::size_t>(out.size()) != locations.size())
        throw std::invalid_argument("decode_sequence: outputs and locations differ in size");
    if (!(frame_rate > 0.0)) throw std::invalid_argument("decode_sequence: frame_rate must be positive");

    std::vector<Proposal> candidates;
    std::vector<double> verb_buf, noun_buf;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        const PyramidLocation& loc = locations[static_cast<std::size_t>(i)];
        const auto level = static_cast<std::size_t>(loc.level);
        const Eigen::Index begin = out.level_begin.at(level);
        const Eigen::Index len = out.level_begin.at(level + 1) - begin;
        const Interval iv = decode_boundaries(loc.t, out.offsets(0, i), out.offsets(1, i), sequence_length);
        const double p_s = lookup_confidence(out.confidences.row(0).segment(begin, len), iv.start, loc.stride);
        const double p_e = lookup_confidence(out.confidences.row(1).segment(begin, len), iv.end, loc.stride);

        const auto emit = [&](ActionLabel label, double p_a) {
            if (!(p_a > cfg.pre_threshold)) return;
            candidates.push_back({iv, label, fuse_scores(cfg.fusion, p_a, p_s, p_e), loc, p_a, p_s, p_e});
        };

        if (labels.compound()) {
            const int nv = labels.class_counts[0];
            const int nn = labels.class_counts[1];
            verb_buf.resize(static_cast<std::size_t>(nv));
            noun_buf.resize(static_cast<std::size_t>(nn));
            for (int r = 0; r < nv; ++r) verb_buf[static_cast<std::size_t>(r)] = out.logits(r, i);
            for (int r = 0; r < nn; ++r) noun_buf[static_cast<std::size_t>(r)] = out.logits(nv + r, i);
            for (const auto& c : combine_multitask(verb_buf, noun_buf, std::min(cfg.top_v, nv), std::min(cfg.top_n, nn)))
                emit({c.verb, c.noun}, c.p_a);
        } else {
            for (Eigen::Index r = 0; r < out.logits.rows(); ++r)
                emit({static_cast<int>(r), -1}, sigmoid(out.logits(r, i)));
        }
    }

    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Proposal& a, const Proposal& b) { return a.score > b.score; });
    if (cfg.pre_top_k >= 0 && candidates.size() > static_cast<std::size_t>(cfg.pre_top_k))
        candidates.resize(static_cast<std::size_t>(cfg.pre_top_k));
    for (auto& c : candidates) {
        c.interval.start /= frame_rate;
        c.interval.end /= frame_rate;
    }
    return soft_nms(std::move(candidates), cfg.nms);
}

}  // namespace bcdet
