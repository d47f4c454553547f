#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bcdet/label.hpp"
#include "bcdet/timeline.hpp"

namespace bcdet {

struct Detection {
    std::string video_id;
    Interval interval;  // seconds
    ActionLabel label;
    double score = 0.0;
};

struct GroundTruth {
    std::string video_id;
    Interval interval;  // seconds
    ActionLabel label;
};

/// Detection indices in rank order: score descending, then earlier start,
/// then input order.
std::vector<std::size_t> rank_detections(std::span<const Detection> detections);

/// Greedy matching in rank order. Entry k is the ground-truth index matched
/// by the k-th ranked detection, or -1 for a false positive. Labels are not
/// inspected; callers pass one class at a time.
std::vector<int> match_ranked(std::span<const Detection> detections, std::span<const std::size_t> ranked,
                              std::span<const GroundTruth> gts, double threshold);

/// Area under the monotone precision envelope, from true-positive flags in
/// rank order.
double ap_from_flags(std::span<const std::uint8_t> tp, std::size_t num_gt);

/// AP of one class at one tIoU threshold.
double average_precision(std::span<const Detection> detections, std::span<const GroundTruth> gts, double threshold);

struct BoundaryErrorCurves {
    std::vector<double> budgets;  // seconds
    std::vector<double> start_fraction;
    std::vector<double> end_fraction;
};

struct LengthGroup {
    std::string name;
    double lo = 0.0;  // exclusive
    double hi = std::numeric_limits<double>::infinity();  // inclusive

    bool contains(double length) const { return length > lo && length <= hi; }
};

/// XS (0,2], S (2,4], M (4,6], L (6,8], XL (8,inf) seconds.
std::vector<LengthGroup> default_length_groups();

struct GroupScore {
    std::string name;
    double average_map = 0.0;
    std::size_t num_gt = 0;
};

struct EvalReport {
    std::vector<double> thresholds;
    std::vector<double> map;  // one per threshold
    double average_map = 0.0;
    std::map<ActionLabel, std::vector<double>> per_class_ap;
    BoundaryErrorCurves curves;        // empty unless requested
    std::vector<GroupScore> length_groups;  // groups without ground truth are absent
};

/// mAP per threshold over classes that have ground truth, and their mean.
EvalReport map_at_thresholds(std::span<const Detection> detections, std::span<const GroundTruth> gts,
                             std::span<const double> thresholds);

/// Fraction of ground truths whose matched detection (greedy matching at
/// `match_threshold`) has |start error| (resp. end) within each budget.
/// Unmatched ground truths never count.
BoundaryErrorCurves boundary_error_curve(std::span<const Detection> detections, std::span<const GroundTruth> gts,
                                         std::span<const double> budgets, double match_threshold = 0.5);

/// Average mAP with ground truth restricted to each length group.
/// Detections matched to out-of-group ground truth are dropped, not counted
/// as false positives.
std::vector<GroupScore> length_stratified_map(std::span<const Detection> detections, std::span<const GroundTruth> gts,
                                              std::span<const LengthGroup> groups, std::span<const double> thresholds);

std::vector<double> epic_thresholds();        // 0.1 .. 0.5
std::vector<double> thumos_thresholds();      // 0.3 .. 0.7
std::vector<double> activitynet_thresholds();  // 0.5, 0.75, 0.95

}  // namespace bcdet
