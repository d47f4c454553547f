#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bcdet/assign.hpp"
#include "bcdet/heads.hpp"
#include "bcdet/timeline.hpp"

namespace bcdet {

struct LossHyper {
    double beta = 0.5;   // GIoU threshold for confidence supervision
    double gamma = 0.5;  // GIoU loss weight
    double omega = 0.5;  // confidence loss weight
    double focal_alpha = 0.25;
    double focal_gamma = 2.0;
    /// Per-task weight inside the classification loss. Empty means 1 for a
    /// single task and 0.5 each for verb/noun.
    std::vector<double> task_weights;

    double task_weight(const LabelSpace& labels, int task) const {
        if (!task_weights.empty()) return task_weights.at(static_cast<std::size_t>(task));
        return labels.compound() ? 0.5 : 1.0;
    }
};

struct LossBreakdown {
    double l_cls = 0.0;
    double l_giou = 0.0;
    double l_conf_s = 0.0;
    double l_conf_e = 0.0;
    double total = 0.0;
    std::size_t num_positive = 0;
    std::size_t num_conf = 0;
};

/// total = l_cls + gamma * l_giou + omega * (l_conf_s + l_conf_e).
inline LossBreakdown total_loss(double l_cls, double l_giou, double l_conf_s, double l_conf_e, double gamma,
                                double omega) {
    if (gamma < 0.0 || omega < 0.0) throw std::invalid_argument("loss weights must be non-negative");
    LossBreakdown out;
    out.l_cls = l_cls;
    out.l_giou = l_giou;
    out.l_conf_s = l_conf_s;
    out.l_conf_e = l_conf_e;
    out.total = l_cls + gamma * l_giou + omega * (l_conf_s + l_conf_e);
    return out;
}

namespace detail {

template <typename Scalar>
Scalar softplus(Scalar x) {
    return x > Scalar(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace detail

/// Sigmoid focal loss of one logit against a binary target, and its
/// derivative with respect to the logit.
template <typename Scalar>
std::pair<Scalar, Scalar> focal_term(Scalar logit, Scalar target, Scalar alpha, Scalar gamma) {
    const Scalar p = Scalar(1) / (Scalar(1) + std::exp(-logit));
    if (target > Scalar(0.5)) {
        const Scalar log_p = -detail::softplus(-logit);
        const Scalar q = std::pow(Scalar(1) - p, gamma);
        const Scalar loss = -alpha * q * log_p;
        const Scalar grad = alpha * q * (gamma * p * log_p - (Scalar(1) - p));
        return {loss, grad};
    }
    const Scalar log_q = -detail::softplus(logit);
    const Scalar pg = std::pow(p, gamma);
    const Scalar loss = -(Scalar(1) - alpha) * pg * log_q;
    const Scalar grad = (Scalar(1) - alpha) * pg * (p - gamma * (Scalar(1) - p) * log_q);
    return {loss, grad};
}

/// One-vs-all focal loss summed over every class at included locations,
/// divided by max(1, #positives). An empty `included` includes everything.
template <typename Derived, typename Other>
double focal_loss(const Eigen::MatrixBase<Derived>& logits, const Eigen::MatrixBase<Other>& targets,
                  std::span<const std::uint8_t> is_positive, std::span<const std::uint8_t> included = {},
                  double alpha = 0.25, double gamma = 2.0) {
    if (logits.rows() != targets.rows() || logits.cols() != targets.cols())
        throw std::invalid_argument("focal_loss: logits and targets differ in shape");
    const auto npos = std::count(is_positive.begin(), is_positive.end(), 1);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < logits.cols(); ++i) {
        if (!included.empty() && !included[static_cast<std::size_t>(i)]) continue;
        for (Eigen::Index r = 0; r < logits.rows(); ++r)
            sum += focal_term<double>(logits(r, i), targets(r, i), alpha, gamma).first;
    }
    return sum / static_cast<double>(std::max<std::ptrdiff_t>(1, npos));
}

/// d giou_1d(pred, target) / d(pred.start, pred.end). Subgradients at kinks
/// take the branch where the prediction does not win the min/max.
template <typename Scalar>
std::pair<Scalar, Scalar> giou_1d_gradient(const IntervalT<Scalar>& pred, const IntervalT<Scalar>& target) {
    const Scalar ps = pred.start, pe = pred.end, gs = target.start, ge = target.end;
    const Scalar inter = intersection_length(pred, target);
    const bool overlap = inter > Scalar(0);
    const Scalar di_ds = (overlap && ps > gs) ? Scalar(-1) : Scalar(0);
    const Scalar di_de = (overlap && pe < ge) ? Scalar(1) : Scalar(0);
    const Scalar uni = (pe - ps) + (ge - gs) - inter;
    const Scalar du_ds = Scalar(-1) - di_ds;
    const Scalar du_de = Scalar(1) - di_de;
    const Scalar hull = std::max(pe, ge) - std::min(ps, gs);
    const Scalar dc_ds = ps < gs ? Scalar(-1) : Scalar(0);
    const Scalar dc_de = pe > ge ? Scalar(1) : Scalar(0);
    const auto d = [&](Scalar di, Scalar du, Scalar dc) {
        return (di * uni - inter * du) / (uni * uni) + (du * hull - uni * dc) / (hull * hull);
    };
    return {d(di_ds, du_ds, dc_ds), d(di_de, du_de, dc_de)};
}

/// Mean of (1 - giou_1d) over positive locations; zero without positives.
inline double giou_regression_loss(std::span<const Interval> predicted, std::span<const Interval> targets,
                                   std::span<const std::uint8_t> is_positive) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (!is_positive[i]) continue;
        sum += 1.0 - giou_1d(predicted[i], targets[i]);
        ++n;
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

/// Mean squared error over masked locations; zero for an empty mask.
template <typename Derived, typename Other>
double confidence_loss(const Eigen::MatrixBase<Derived>& predicted, const Eigen::MatrixBase<Other>& target,
                       std::span<const std::uint8_t> mask) {
    if (predicted.size() != target.size() || static_cast<std::size_t>(predicted.size()) != mask.size())
        throw std::invalid_argument("confidence_loss: shape mismatch");
    double sum = 0.0;
    std::size_t n = 0;
    for (Eigen::Index i = 0; i < predicted.size(); ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        const double e = static_cast<double>(predicted(i)) - static_cast<double>(target(i));
        sum += e * e;
        ++n;
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

/// Outcome of one loss evaluation over a batch of locations.
struct LossEvaluation {
    LossBreakdown parts;
    std::vector<std::uint8_t> conf_mask;
};

/// All loss terms for concatenated head outputs. The confidence mask is
/// derived from the current predictions unless `fixed_mask` is given; it is
/// never differentiated. When `grads` is non-null it receives d total / d
/// outputs.
template <typename Scalar>
LossEvaluation evaluate_loss(const HeadOutputs<Scalar>& out, std::span<const PyramidLocation> locations,
                             const LocationTargets& targets, const LabelSpace& labels, const LossHyper& hyper,
                             const std::vector<std::uint8_t>* fixed_mask = nullptr,
                             OutputGradients<Scalar>* grads = nullptr) {
    const Eigen::Index n = out.size();
    if (static_cast<std::size_t>(n) != locations.size() || static_cast<std::size_t>(n) != targets.size())
        throw std::invalid_argument("evaluate_loss: outputs, locations and targets differ in size");
    if (grads) *grads = OutputGradients<Scalar>::zeros(out);

    LossEvaluation eval;
    auto& parts = eval.parts;
    parts.num_positive = targets.num_positive();
    const double cls_norm = 1.0 / static_cast<double>(std::max<std::size_t>(1, parts.num_positive));

    // classification
    double l_cls = 0.0;
    for (int task = 0; task < static_cast<int>(labels.class_counts.size()); ++task) {
        const double tw = hyper.task_weight(labels, task);
        const int off = labels.task_offset(task);
        const int rows = labels.class_counts[static_cast<std::size_t>(task)];
        double sum = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (targets.is_omitted(static_cast<std::size_t>(i))) continue;
            for (int r = off; r < off + rows; ++r) {
                const auto [loss, d] = focal_term<Scalar>(out.logits(r, i), static_cast<Scalar>(targets.class_targets(r, i)),
                                                          static_cast<Scalar>(hyper.focal_alpha),
                                                          static_cast<Scalar>(hyper.focal_gamma));
                sum += static_cast<double>(loss);
                if (grads) grads->logits(r, i) = static_cast<Scalar>(tw * cls_norm) * d;
            }
        }
        l_cls += tw * sum * cls_norm;
    }

    // regression
    double l_giou = 0.0;
    std::vector<Interval> predicted(static_cast<std::size_t>(n));
    const double reg_norm = parts.num_positive == 0 ? 0.0 : 1.0 / static_cast<double>(parts.num_positive);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        const Scalar t = static_cast<Scalar>(locations[k].t);
        const IntervalT<Scalar> pred{t - out.offsets(0, i), t + out.offsets(1, i)};
        predicted[k] = {static_cast<double>(pred.start), static_cast<double>(pred.end)};
        if (!targets.is_positive[k]) continue;
        const IntervalT<Scalar> gt{static_cast<Scalar>(targets.assigned[k].start),
                                   static_cast<Scalar>(targets.assigned[k].end)};
        l_giou += 1.0 - static_cast<double>(giou_1d(pred, gt));
        if (grads) {
            const auto [dg_ds, dg_de] = giou_1d_gradient(pred, gt);
            const auto w = static_cast<Scalar>(hyper.gamma * reg_norm);
            grads->offsets(0, i) = w * dg_ds;  // start = t - offset, loss = 1 - giou
            grads->offsets(1, i) = -w * dg_de;
        }
    }
    l_giou *= reg_norm;

    // boundary confidence
    eval.conf_mask = fixed_mask ? *fixed_mask : confidence_training_mask(predicted, targets, hyper.beta);
    parts.num_conf = static_cast<std::size_t>(std::count(eval.conf_mask.begin(), eval.conf_mask.end(), 1));
    double l_s = 0.0, l_e = 0.0;
    if (parts.num_conf > 0) {
        const double norm = 1.0 / static_cast<double>(parts.num_conf);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!eval.conf_mask[static_cast<std::size_t>(i)]) continue;
            const Scalar es = out.confidences(0, i) - static_cast<Scalar>(targets.p_s(i));
            const Scalar ee = out.confidences(1, i) - static_cast<Scalar>(targets.p_e(i));
            l_s += static_cast<double>(es * es);
            l_e += static_cast<double>(ee * ee);
            if (grads) {
                const auto w = static_cast<Scalar>(2.0 * hyper.omega * norm);
                grads->confidences(0, i) = w * es;
                grads->confidences(1, i) = w * ee;
            }
        }
        l_s *= norm;
        l_e *= norm;
    }

    const LossBreakdown combined = total_loss(l_cls, l_giou, l_s, l_e, hyper.gamma, hyper.omega);
    parts.l_cls = combined.l_cls;
    parts.l_giou = combined.l_giou;
    parts.l_conf_s = combined.l_conf_s;
    parts.l_conf_e = combined.l_conf_e;
    parts.total = combined.total;
    return eval;
}

/// One sequence prepared for training: features, their locations, and the
/// static targets for those locations.
struct TrainingSample {
    FeaturePyramid<double> features;
    std::vector<PyramidLocation> locations;
    LocationTargets targets;
};

namespace detail {

inline LocationTargets concat_targets(std::span<const TrainingSample* const> batch) {
    if (batch.size() == 1) return batch.front()->targets;
    Eigen::Index n = 0;
    for (const auto* s : batch) n += static_cast<Eigen::Index>(s->targets.size());
    const Eigen::Index c = batch.front()->targets.class_targets.rows();
    LocationTargets out;
    out.class_targets.resize(c, n);
    out.r_s.resize(n);
    out.r_e.resize(n);
    out.p_s.resize(n);
    out.p_e.resize(n);
    Eigen::Index k = 0;
    for (const auto* s : batch) {
        const auto& t = s->targets;
        const auto m = static_cast<Eigen::Index>(t.size());
        out.class_targets.middleCols(k, m) = t.class_targets;
        out.r_s.segment(k, m) = t.r_s;
        out.r_e.segment(k, m) = t.r_e;
        out.p_s.segment(k, m) = t.p_s;
        out.p_e.segment(k, m) = t.p_e;
        out.is_positive.insert(out.is_positive.end(), t.is_positive.begin(), t.is_positive.end());
        out.assigned.insert(out.assigned.end(), t.assigned.begin(), t.assigned.end());
        out.conf_mask.insert(out.conf_mask.end(), t.conf_mask.begin(), t.conf_mask.end());
        if (t.omitted.empty())
            out.omitted.insert(out.omitted.end(), t.size(), 0);
        else
            out.omitted.insert(out.omitted.end(), t.omitted.begin(), t.omitted.end());
        k += m;
    }
    return out;
}

template <typename Scalar>
HeadOutputs<Scalar> concat_outputs(const std::vector<HeadOutputs<Scalar>>& parts) {
    if (parts.size() == 1) return parts.front();
    Eigen::Index n = 0;
    for (const auto& p : parts) n += p.size();
    HeadOutputs<Scalar> out;
    out.offsets.resize(2, n);
    out.tokens.resize(2, n);
    out.confidences.resize(2, n);
    out.logits.resize(parts.front().logits.rows(), n);
    Eigen::Index k = 0;
    for (const auto& p : parts) {
        out.offsets.middleCols(k, p.size()) = p.offsets;
        out.tokens.middleCols(k, p.size()) = p.tokens;
        out.confidences.middleCols(k, p.size()) = p.confidences;
        out.logits.middleCols(k, p.size()) = p.logits;
        k += p.size();
    }
    out.level_begin = {0, n};
    return out;
}

}  // namespace detail

/// Loss over a batch of sequences, normalized over the whole batch. With
/// `accumulate` set, parameter gradients are added to w.grads.
template <typename Scalar>
LossEvaluation batch_loss(HeadWeights<Scalar>& w, std::span<const TrainingSample* const> batch,
                          const LossHyper& hyper, bool accumulate,
                          const std::vector<std::uint8_t>* fixed_mask = nullptr) {
    if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
    std::vector<HeadOutputs<Scalar>> outputs;
    std::vector<ForwardCache<Scalar>> caches(batch.size());
    std::vector<FeaturePyramid<Scalar>> converted;
    std::vector<PyramidLocation> locations;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const TrainingSample& s = *batch[b];
        if constexpr (std::is_same_v<Scalar, double>) {
            outputs.push_back(forward_heads(s.features, w, accumulate ? &caches[b] : nullptr));
        } else {
            converted.push_back(s.features.template cast<Scalar>());
            outputs.push_back(forward_heads(converted.back(), w, accumulate ? &caches[b] : nullptr));
        }
        locations.insert(locations.end(), s.locations.begin(), s.locations.end());
    }
    const HeadOutputs<Scalar> joined = detail::concat_outputs(outputs);
    const LocationTargets targets = detail::concat_targets(batch);

    OutputGradients<Scalar> grads;
    LossEvaluation eval =
        evaluate_loss(joined, locations, targets, w.config.labels, hyper, fixed_mask, accumulate ? &grads : nullptr);
    if (!accumulate) return eval;

    Eigen::Index k = 0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const Eigen::Index m = outputs[b].size();
        OutputGradients<Scalar> part{grads.offsets.middleCols(k, m), grads.confidences.middleCols(k, m),
                                     grads.logits.middleCols(k, m)};
        backward_heads(w, caches[b], outputs[b], part);
        k += m;
    }
    return eval;
}

}  // namespace bcdet
