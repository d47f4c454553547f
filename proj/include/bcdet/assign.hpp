#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bcdet/label.hpp"
#include "bcdet/timeline.hpp"

namespace bcdet {

/// Ground-truth action in feature-frame units. Either `single_label` or both
/// `verb_label` and `noun_label` are set.
struct GroundTruthSegment {
    Interval interval;
    std::optional<int> verb_label;
    std::optional<int> noun_label;
    std::optional<int> single_label;

    static GroundTruthSegment single(Interval iv, int label) { return {iv, std::nullopt, std::nullopt, label}; }
    static GroundTruthSegment verb_noun(Interval iv, int verb, int noun) { return {iv, verb, noun, std::nullopt}; }

    ActionLabel label() const;
    void validate() const;
};

/// Per-location training targets, one column/entry per location in the
/// order of the location list they were built from.
struct LocationTargets {
    Eigen::MatrixXd class_targets;  // total_classes x N, multi-hot
    Eigen::VectorXd r_s;            // valid where is_positive
    Eigen::VectorXd r_e;
    Eigen::VectorXd p_s;
    Eigen::VectorXd p_e;
    std::vector<std::uint8_t> is_positive;
    std::vector<Interval> assigned;  // segment used for regression, valid where is_positive
    std::vector<std::uint8_t> conf_mask;
    // inside an action but off its central window: left out of the
    // classification loss; empty means nothing is omitted
    std::vector<std::uint8_t> omitted;

    bool is_omitted(std::size_t i) const { return !omitted.empty() && omitted[i]; }
    std::size_t size() const { return is_positive.size(); }
    std::size_t num_positive() const;
    std::size_t num_conf() const;
};

/// Center-sampling rule: t is positive for a segment when it lies strictly
/// inside it and either within alpha*stride/2 of the center or the segment is
/// shorter than alpha*stride.
bool is_center_sample(const PyramidLocation& loc, const Interval& segment, int alpha);

/// Classification and regression targets. Among segments that sample t, the
/// shortest one wins (ties go to the earlier segment).
LocationTargets assign_regression_targets(std::span<const PyramidLocation> locations,
                                          std::span<const GroundTruthSegment> segments,
                                          const LabelSpace& labels, int alpha);

/// Start/end confidence curves: overlap of the location's one-stride region
/// with a d/5 window around each boundary, as a fraction of the stride,
/// maximized over segments.
std::pair<Eigen::VectorXd, Eigen::VectorXd> boundary_confidence_targets(std::span<const PyramidLocation> locations,
                                                                        std::span<const GroundTruthSegment> segments);

/// Locations that train the confidence branch this step: positive and with
/// giou_1d(predicted, assigned) >= beta.
std::vector<std::uint8_t> confidence_training_mask(std::span<const Interval> predicted,
                                                   const LocationTargets& targets, double beta);

/// Full static target set (everything except conf_mask, which depends on
/// the current predictions).
LocationTargets assign_targets(std::span<const PyramidLocation> locations,
                               std::span<const GroundTruthSegment> segments, const LabelSpace& labels,
                               int alpha);

}  // namespace bcdet
