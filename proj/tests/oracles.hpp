#pragma once

// Independent reference implementations used by the tests. Nothing here
// calls into the library's own math.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <gmpxx.h>
#include <Eigen/Dense>

#include "bcdet/decode.hpp"
#include "bcdet/eval.hpp"

namespace oracle {

inline mpq_class exact(double v) {
    mpq_class q(v);  // doubles are dyadic rationals, conversion is exact
    q.canonicalize();
    return q;
}

struct ExactInterval {
    mpq_class start, end;
};

inline ExactInterval exact(const bcdet::Interval& iv) { return {exact(iv.start), exact(iv.end)}; }

inline mpq_class overlap(const ExactInterval& a, const ExactInterval& b) {
    const mpq_class lo = a.start > b.start ? a.start : b.start;
    const mpq_class hi = a.end < b.end ? a.end : b.end;
    return hi > lo ? mpq_class(hi - lo) : mpq_class(0);
}

inline mpq_class tiou(const ExactInterval& a, const ExactInterval& b) {
    const mpq_class inter = overlap(a, b);
    const mpq_class uni = (a.end - a.start) + (b.end - b.start) - inter;
    if (uni <= 0) return 0;
    return inter / uni;
}

inline mpq_class giou(const ExactInterval& a, const ExactInterval& b) {
    const mpq_class inter = overlap(a, b);
    const mpq_class uni = (a.end - a.start) + (b.end - b.start) - inter;
    const mpq_class lo = a.start < b.start ? a.start : b.start;
    const mpq_class hi = a.end > b.end ? a.end : b.end;
    const mpq_class hull = hi - lo;
    if (hull <= 0) return 0;
    const mpq_class iou = uni > 0 ? mpq_class(inter / uni) : mpq_class(0);
    return iou - (hull - uni) / hull;
}

/// Direct kernel-3 convolution with zero padding. w is out x (3*in), taps
/// ordered [t-1 | t | t+1].
inline Eigen::MatrixXd conv3(const Eigen::MatrixXd& w, const Eigen::VectorXd& b, const Eigen::MatrixXd& x) {
    const Eigen::Index in = x.rows(), n = x.cols(), out = w.rows();
    Eigen::MatrixXd y(out, n);
    for (Eigen::Index o = 0; o < out; ++o)
        for (Eigen::Index t = 0; t < n; ++t) {
            double acc = b(o);
            for (int k = 0; k < 3; ++k) {
                const Eigen::Index src = t + k - 1;
                if (src < 0 || src >= n) continue;
                for (Eigen::Index c = 0; c < in; ++c) acc += w(o, k * in + c) * x(c, src);
            }
            y(o, t) = acc;
        }
    return y;
}

/// Quadratic-time Soft-NMS: a shrinking pool, rescanned for its maximum
/// after every selection.
inline std::vector<bcdet::Proposal> soft_nms(std::vector<bcdet::Proposal> pool, double sigma, double floor,
                                             int max_keep) {
    std::vector<bcdet::Proposal> kept;
    pool.erase(std::remove_if(pool.begin(), pool.end(), [&](const auto& p) { return p.score < floor; }), pool.end());
    while (!pool.empty() && static_cast<int>(kept.size()) < max_keep) {
        auto it = std::max_element(pool.begin(), pool.end(),
                                   [](const auto& a, const auto& b) { return a.score < b.score; });
        const bcdet::Proposal top = *it;
        pool.erase(it);
        kept.push_back(top);
        for (auto& p : pool) {
            if (!(p.label == top.label)) continue;
            const double inter = std::max(0.0, std::min(p.interval.end, top.interval.end) -
                                                   std::max(p.interval.start, top.interval.start));
            const double uni = p.interval.length() + top.interval.length() - inter;
            const double iou = uni > 0.0 ? inter / uni : 0.0;
            p.score *= std::exp(-(iou * iou) / sigma);
        }
        pool.erase(std::remove_if(pool.begin(), pool.end(), [&](const auto& p) { return p.score < floor; }),
                   pool.end());
    }
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    return kept;
}

struct ApOracle {
    double value = 0.0;  // same summation order as a rank-ordered accumulation
    mpq_class rational;  // exact value of the same quantity
};

/// Exhaustive AP: rank by (score desc, start asc, input order), match each
/// detection to its best unmatched ground truth by exact tIoU, then integrate
/// the precision envelope recomputed from scratch at every true positive.
inline ApOracle average_precision(const std::vector<bcdet::Detection>& dets, const std::vector<bcdet::GroundTruth>& gts,
                                  double threshold) {
    ApOracle r;
    if (gts.empty() || dets.empty()) return r;
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < order.size(); ++i)
        for (std::size_t j = i + 1; j < order.size(); ++j) {
            const auto& a = dets[order[i]];
            const auto& b = dets[order[j]];
            const bool swap = b.score > a.score ||
                              (b.score == a.score && (b.interval.start < a.interval.start ||
                                                      (b.interval.start == a.interval.start && order[j] < order[i])));
            if (swap) std::swap(order[i], order[j]);
        }

    const mpq_class thr = exact(threshold);
    std::vector<bool> used(gts.size(), false);
    std::vector<bool> tp;
    for (std::size_t idx : order) {
        const auto& d = dets[idx];
        int best = -1;
        mpq_class best_iou = -1;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (used[g] || gts[g].video_id != d.video_id) continue;
            const mpq_class iou = tiou(exact(d.interval), exact(gts[g].interval));
            if (iou > best_iou) {
                best_iou = iou;
                best = static_cast<int>(g);
            }
        }
        const bool hit = best >= 0 && best_iou >= thr;
        if (hit) used[static_cast<std::size_t>(best)] = true;
        tp.push_back(hit);
    }

    const std::size_t n = tp.size();
    const double step = 1.0 / static_cast<double>(gts.size());
    for (std::size_t k = 0; k < n; ++k) {
        if (!tp[k]) continue;
        double env = 0.0;
        mpq_class env_q = 0;
        for (std::size_t j = k; j < n; ++j) {
            const auto hits = static_cast<long>(std::count(tp.begin(), tp.begin() + static_cast<long>(j) + 1, true));
            env = std::max(env, static_cast<double>(hits) / static_cast<double>(j + 1));
            mpq_class p(mpz_class(hits), mpz_class(static_cast<long>(j + 1)));
            p.canonicalize();
            if (p > env_q) env_q = p;
        }
        r.value += step * env;
        r.rational += env_q / mpq_class(static_cast<long>(gts.size()));
    }
    return r;
}

}  // namespace oracle
