#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "bcdet/heads.hpp"
#include "bcdet/label.hpp"
#include "bcdet/timeline.hpp"

namespace bcdet {

/// Ways of turning (action, start, end) confidences into one ranking score.
enum class FusionMode {
    boundary_only,  // p_s * p_e
    cls_only,       // p_a
    cls_start,      // p_a * p_s
    cls_end,        // p_a * p_e
    mean3,          // (p_a + p_s + p_e) / 3
    product3,       // p_a * p_s * p_e
    cls_sqrt_se,    // p_a * sqrt(p_s * p_e)
};

inline constexpr std::array<FusionMode, 7> kAllFusionModes{
    FusionMode::boundary_only, FusionMode::cls_only, FusionMode::cls_start,  FusionMode::cls_end,
    FusionMode::mean3,         FusionMode::product3, FusionMode::cls_sqrt_se};

std::string_view to_string(FusionMode mode);
/// Throws std::invalid_argument for unknown names.
FusionMode parse_fusion_mode(std::string_view name);

double fuse_scores(FusionMode mode, double p_a, double p_s, double p_e);

/// Value at the nearest index of a per-level confidence map, clamped to the
/// level bounds. `position` is in level-0 units.
template <typename Derived>
double lookup_confidence(const Eigen::DenseBase<Derived>& values, double position, double stride) {
    const Eigen::Index n = values.size();
    if (n == 0) return 0.0;
    double idx = std::floor(position / stride + 0.5);
    idx = std::clamp(idx, 0.0, static_cast<double>(n - 1));
    return static_cast<double>(values(static_cast<Eigen::Index>(idx)));
}

struct VerbNounCandidate {
    int verb = -1;
    int noun = -1;
    double p_a = 0.0;
};

/// Every pairing of the top-v verbs with the top-n nouns, scored by the
/// product of their sigmoid probabilities. Order: verb rank, then noun rank.
std::vector<VerbNounCandidate> combine_multitask(std::span<const double> verb_logits,
                                                 std::span<const double> noun_logits, int v, int n);

struct Proposal {
    Interval interval;  // seconds
    ActionLabel label;
    double score = 0.0;
    PyramidLocation origin;
    double p_a = 0.0;
    double p_s = 0.0;
    double p_e = 0.0;
};

struct SoftNmsOptions {
    double decay_sigma = 0.5;
    double score_floor = 0.001;
    int max_keep = 200;
};

/// Gaussian-decay Soft-NMS within each label; output sorted by final score.
std::vector<Proposal> soft_nms(std::vector<Proposal> proposals, const SoftNmsOptions& opts);

struct DecodeConfig {
    FusionMode fusion = FusionMode::cls_sqrt_se;
    double pre_threshold = 0.001;  // minimum p_a
    int pre_top_k = 2000;
    int top_v = 10;
    int top_n = 30;
    SoftNmsOptions nms;
};

/// Per-location proposals for one sequence, fused, filtered and suppressed.
/// `sequence_length` is in level-0 feature frames.
std::vector<Proposal> decode_sequence(const HeadOutputs<double>& out, std::span<const PyramidLocation> locations,
                                      const LabelSpace& labels, double sequence_length, double frame_rate,
                                      const DecodeConfig& cfg);

}  // namespace bcdet
