#include "bcdet/assign.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bcdet {

ActionLabel GroundTruthSegment::label() const {
    if (single_label) return {*single_label, -1};
    return {verb_label.value_or(-1), noun_label.value_or(-1)};
}

void GroundTruthSegment::validate() const {
    const bool single = single_label.has_value();
    const bool pair = verb_label.has_value() && noun_label.has_value();
    const bool partial = verb_label.has_value() != noun_label.has_value();
    if (single == pair || partial)
        throw std::invalid_argument("segment needs either a single label or a verb/noun pair");
    if (!(interval.length() > 0.0)) throw std::invalid_argument("segment length must be positive");
}

std::size_t LocationTargets::num_positive() const {
    return static_cast<std::size_t>(std::count(is_positive.begin(), is_positive.end(), 1));
}

std::size_t LocationTargets::num_conf() const {
    return static_cast<std::size_t>(std::count(conf_mask.begin(), conf_mask.end(), 1));
}

bool is_center_sample(const PyramidLocation& loc, const Interval& segment, int alpha) {
    if (!(loc.t > segment.start && loc.t < segment.end)) return false;
    const double window = static_cast<double>(alpha) * loc.stride;
    if (segment.length() < window) return true;
    const double center = 0.5 * (segment.start + segment.end);
    return std::abs(loc.t - center) <= 0.5 * window;
}

LocationTargets assign_regression_targets(std::span<const PyramidLocation> locations,
                                          std::span<const GroundTruthSegment> segments,
                                          const LabelSpace& labels, int alpha) {
    if (alpha < 1) throw std::invalid_argument("alpha must be at least 1");
    labels.validate();
    for (const auto& seg : segments) {
        seg.validate();
        labels.check(seg.label());
    }

    const auto n = static_cast<Eigen::Index>(locations.size());
    LocationTargets out;
    out.class_targets = Eigen::MatrixXd::Zero(labels.total_classes(), n);
    out.r_s = Eigen::VectorXd::Zero(n);
    out.r_e = Eigen::VectorXd::Zero(n);
    out.p_s = Eigen::VectorXd::Zero(n);
    out.p_e = Eigen::VectorXd::Zero(n);
    out.is_positive.assign(locations.size(), 0);
    out.assigned.assign(locations.size(), Interval{});
    out.conf_mask.assign(locations.size(), 0);
    out.omitted.assign(locations.size(), 0);

    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& loc = locations[static_cast<std::size_t>(i)];
        const GroundTruthSegment* best = nullptr;
        bool inside = false;
        for (const auto& seg : segments) {
            inside = inside || (loc.t > seg.interval.start && loc.t < seg.interval.end);
            if (!is_center_sample(loc, seg.interval, alpha)) continue;
            if (best == nullptr || seg.interval.length() < best->interval.length()) best = &seg;
        }
        if (best == nullptr) {
            out.omitted[static_cast<std::size_t>(i)] = inside ? 1 : 0;
            continue;
        }

        out.is_positive[static_cast<std::size_t>(i)] = 1;
        out.assigned[static_cast<std::size_t>(i)] = best->interval;
        out.r_s(i) = loc.t - best->interval.start;
        out.r_e(i) = best->interval.end - loc.t;
        const ActionLabel label = best->label();
        out.class_targets(label.primary, i) = 1.0;
        if (labels.compound()) out.class_targets(labels.task_offset(1) + label.secondary, i) = 1.0;
    }
    return out;
}

namespace {

double boundary_overlap(const PyramidLocation& loc, double boundary, double half_width) {
    const Interval cell{loc.t - 0.5 * loc.stride, loc.t + 0.5 * loc.stride};
    const Interval region{boundary - half_width, boundary + half_width};
    return std::clamp(intersection_length(cell, region) / loc.stride, 0.0, 1.0);
}

}  // namespace

std::pair<Eigen::VectorXd, Eigen::VectorXd> boundary_confidence_targets(
    std::span<const PyramidLocation> locations, std::span<const GroundTruthSegment> segments) {
    for (const auto& seg : segments)
        if (!(seg.interval.length() > 0.0)) throw std::invalid_argument("segment length must be positive");

    const auto n = static_cast<Eigen::Index>(locations.size());
    Eigen::VectorXd p_s = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd p_e = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& loc = locations[static_cast<std::size_t>(i)];
        for (const auto& seg : segments) {
            const double half = seg.interval.length() / 10.0;
            p_s(i) = std::max(p_s(i), boundary_overlap(loc, seg.interval.start, half));
            p_e(i) = std::max(p_e(i), boundary_overlap(loc, seg.interval.end, half));
        }
    }
    return {std::move(p_s), std::move(p_e)};
}

std::vector<std::uint8_t> confidence_training_mask(std::span<const Interval> predicted,
                                                   const LocationTargets& targets, double beta) {
    if (predicted.size() != targets.size())
        throw std::invalid_argument("confidence mask: prediction count does not match targets");
    std::vector<std::uint8_t> mask(predicted.size(), 0);
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (!targets.is_positive[i]) continue;
        mask[i] = giou_1d(predicted[i], targets.assigned[i]) >= beta ? 1 : 0;
    }
    return mask;
}

LocationTargets assign_targets(std::span<const PyramidLocation> locations,
                               std::span<const GroundTruthSegment> segments, const LabelSpace& labels,
                               int alpha) {
    LocationTargets out = assign_regression_targets(locations, segments, labels, alpha);
    auto [p_s, p_e] = boundary_confidence_targets(locations, segments);
    out.p_s = std::move(p_s);
    out.p_e = std::move(p_e);
    return out;
}

}  // namespace bcdet
