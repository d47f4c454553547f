#include "bcdet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bcdet {

namespace {

struct ClassIndex {
    std::map<ActionLabel, std::vector<std::size_t>> detections;
    std::map<ActionLabel, std::vector<std::size_t>> gts;
};

ClassIndex index_by_class(std::span<const Detection> detections, std::span<const GroundTruth> gts) {
    ClassIndex idx;
    for (std::size_t i = 0; i < detections.size(); ++i) idx.detections[detections[i].label].push_back(i);
    for (std::size_t i = 0; i < gts.size(); ++i) idx.gts[gts[i].label].push_back(i);
    return idx;
}

template <typename T>
std::vector<T> gather(std::span<const T> items, const std::vector<std::size_t>& which) {
    std::vector<T> out;
    out.reserve(which.size());
    for (std::size_t i : which) out.push_back(items[i]);
    return out;
}

std::vector<double> threshold_range(double lo, double hi, double step) {
    std::vector<double> out;
    const int n = static_cast<int>(std::lround((hi - lo) / step));
    for (int i = 0; i <= n; ++i) out.push_back(std::round((lo + step * i) * 1e6) / 1e6);
    return out;
}

}  // namespace

std::vector<std::size_t> rank_detections(std::span<const Detection> detections) {
    std::vector<std::size_t> order(detections.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (detections[a].score != detections[b].score) return detections[a].score > detections[b].score;
        return detections[a].interval.start < detections[b].interval.start;
    });
    return order;
}

std::vector<int> match_ranked(std::span<const Detection> detections, std::span<const std::size_t> ranked,
                              std::span<const GroundTruth> gts, double threshold) {
    std::vector<std::uint8_t> used(gts.size(), 0);
    std::vector<int> out;
    out.reserve(ranked.size());
    for (std::size_t r : ranked) {
        const Detection& det = detections[r];
        int best = -1;
        double best_iou = -1.0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (used[g] || gts[g].video_id != det.video_id) continue;
            const double iou = tiou(det.interval, gts[g].interval);
            if (iou > best_iou) {
                best_iou = iou;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0 && best_iou >= threshold) {
            used[static_cast<std::size_t>(best)] = 1;
            out.push_back(best);
        } else {
            out.push_back(-1);
        }
    }
    return out;
}

double ap_from_flags(std::span<const std::uint8_t> tp, std::size_t num_gt) {
    if (num_gt == 0 || tp.empty()) return 0.0;
    const std::size_t n = tp.size();
    std::vector<double> precision(n);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < n; ++k) {
        hits += tp[k] ? 1 : 0;
        precision[k] = static_cast<double>(hits) / static_cast<double>(k + 1);
    }
    for (std::size_t k = n - 1; k-- > 0;) precision[k] = std::max(precision[k], precision[k + 1]);
    // Recall only moves at true positives, by exactly 1/num_gt.
    const double step = 1.0 / static_cast<double>(num_gt);
    double ap = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        if (tp[k]) ap += step * precision[k];
    return ap;
}

double average_precision(std::span<const Detection> detections, std::span<const GroundTruth> gts, double threshold) {
    if (gts.empty()) return 0.0;
    const std::vector<std::size_t> ranked = rank_detections(detections);
    const std::vector<int> match = match_ranked(detections, ranked, gts, threshold);
    std::vector<std::uint8_t> tp(match.size());
    for (std::size_t k = 0; k < match.size(); ++k) tp[k] = match[k] >= 0 ? 1 : 0;
    return ap_from_flags(tp, gts.size());
}

std::vector<LengthGroup> default_length_groups() {
    const double inf = std::numeric_limits<double>::infinity();
    return {{"XS", 0.0, 2.0}, {"S", 2.0, 4.0}, {"M", 4.0, 6.0}, {"L", 6.0, 8.0}, {"XL", 8.0, inf}};
}

EvalReport map_at_thresholds(std::span<const Detection> detections, std::span<const GroundTruth> gts,
                             std::span<const double> thresholds) {
    if (thresholds.empty()) throw std::invalid_argument("map_at_thresholds: empty threshold set");
    EvalReport report;
    report.thresholds.assign(thresholds.begin(), thresholds.end());
    report.map.assign(thresholds.size(), 0.0);

    const ClassIndex idx = index_by_class(detections, gts);
    for (const auto& [label, gt_ids] : idx.gts) {
        const std::vector<GroundTruth> cls_gts = gather(gts, gt_ids);
        std::vector<Detection> cls_dets;
        if (auto it = idx.detections.find(label); it != idx.detections.end()) cls_dets = gather(detections, it->second);
        auto& row = report.per_class_ap[label];
        for (std::size_t t = 0; t < thresholds.size(); ++t) row.push_back(average_precision(cls_dets, cls_gts, thresholds[t]));
    }

    if (!report.per_class_ap.empty()) {
        for (std::size_t t = 0; t < thresholds.size(); ++t) {
            double sum = 0.0;
            for (const auto& [label, row] : report.per_class_ap) sum += row[t];
            report.map[t] = sum / static_cast<double>(report.per_class_ap.size());
        }
    }
    report.average_map = std::accumulate(report.map.begin(), report.map.end(), 0.0) / static_cast<double>(report.map.size());
    return report;
}

BoundaryErrorCurves boundary_error_curve(std::span<const Detection> detections, std::span<const GroundTruth> gts,
                                         std::span<const double> budgets, double match_threshold) {
    if (!std::is_sorted(budgets.begin(), budgets.end()))
        throw std::invalid_argument("boundary_error_curve: budgets must be ascending");
    BoundaryErrorCurves curves;
    curves.budgets.assign(budgets.begin(), budgets.end());
    curves.start_fraction.assign(budgets.size(), 0.0);
    curves.end_fraction.assign(budgets.size(), 0.0);
    if (gts.empty()) return curves;

    std::vector<double> start_err, end_err;
    const ClassIndex idx = index_by_class(detections, gts);
    for (const auto& [label, gt_ids] : idx.gts) {
        auto it = idx.detections.find(label);
        if (it == idx.detections.end()) continue;
        const std::vector<GroundTruth> cls_gts = gather(gts, gt_ids);
        const std::vector<Detection> cls_dets = gather(detections, it->second);
        const std::vector<std::size_t> ranked = rank_detections(cls_dets);
        const std::vector<int> match = match_ranked(cls_dets, ranked, cls_gts, match_threshold);
        for (std::size_t k = 0; k < match.size(); ++k) {
            if (match[k] < 0) continue;
            const Detection& d = cls_dets[ranked[k]];
            const GroundTruth& g = cls_gts[static_cast<std::size_t>(match[k])];
            start_err.push_back(std::abs(d.interval.start - g.interval.start));
            end_err.push_back(std::abs(d.interval.end - g.interval.end));
        }
    }

    const auto total = static_cast<double>(gts.size());
    for (std::size_t b = 0; b < budgets.size(); ++b) {
        const auto within = [&](const std::vector<double>& errs) {
            return static_cast<double>(std::count_if(errs.begin(), errs.end(), [&](double e) { return e <= budgets[b]; }));
        };
        curves.start_fraction[b] = within(start_err) / total;
        curves.end_fraction[b] = within(end_err) / total;
    }
    return curves;
}

std::vector<GroupScore> length_stratified_map(std::span<const Detection> detections, std::span<const GroundTruth> gts,
                                              std::span<const LengthGroup> groups, std::span<const double> thresholds) {
    if (thresholds.empty()) throw std::invalid_argument("length_stratified_map: empty threshold set");
    const ClassIndex idx = index_by_class(detections, gts);

    struct ClassMatches {
        std::vector<GroundTruth> gts;
        std::vector<std::vector<int>> per_threshold;  // rank-ordered match ids
    };
    std::vector<ClassMatches> classes;
    for (const auto& [label, gt_ids] : idx.gts) {
        ClassMatches cm;
        cm.gts = gather(gts, gt_ids);
        std::vector<Detection> dets;
        if (auto it = idx.detections.find(label); it != idx.detections.end()) dets = gather(detections, it->second);
        const std::vector<std::size_t> ranked = rank_detections(dets);
        for (double th : thresholds) cm.per_threshold.push_back(match_ranked(dets, ranked, cm.gts, th));
        classes.push_back(std::move(cm));
    }

    std::vector<GroupScore> out;
    for (const LengthGroup& group : groups) {
        GroupScore score{group.name, 0.0, 0};
        std::vector<double> maps(thresholds.size(), 0.0);
        std::size_t num_classes = 0;
        for (const ClassMatches& cm : classes) {
            std::vector<std::uint8_t> in_group(cm.gts.size());
            std::size_t n_in = 0;
            for (std::size_t g = 0; g < cm.gts.size(); ++g) {
                in_group[g] = group.contains(cm.gts[g].interval.length()) ? 1 : 0;
                n_in += in_group[g];
            }
            if (n_in == 0) continue;
            ++num_classes;
            score.num_gt += n_in;
            for (std::size_t t = 0; t < thresholds.size(); ++t) {
                std::vector<std::uint8_t> tp;
                for (int m : cm.per_threshold[t]) {
                    if (m >= 0 && !in_group[static_cast<std::size_t>(m)]) continue;
                    tp.push_back(m >= 0 ? 1 : 0);
                }
                maps[t] += ap_from_flags(tp, n_in);
            }
        }
        if (num_classes == 0) continue;
        for (double& m : maps) m /= static_cast<double>(num_classes);
        score.average_map = std::accumulate(maps.begin(), maps.end(), 0.0) / static_cast<double>(maps.size());
        out.push_back(score);
    }
    return out;
}

std::vector<double> epic_thresholds() { return threshold_range(0.1, 0.5, 0.1); }
std::vector<double> thumos_thresholds() { return threshold_range(0.3, 0.7, 0.1); }
std::vector<double> activitynet_thresholds() { return {0.5, 0.75, 0.95}; }

}  // namespace bcdet
