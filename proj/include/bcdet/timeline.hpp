#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace bcdet {

/// Closed interval [start, end] on a time axis (seconds or feature frames).
template <typename Scalar>
struct IntervalT {
    Scalar start{0};
    Scalar end{0};

    Scalar length() const { return end - start; }
    bool valid() const { return end >= start; }

    bool operator==(const IntervalT& other) const = default;
};

using Interval = IntervalT<double>;

template <typename Scalar>
inline Scalar intersection_length(const IntervalT<Scalar>& a, const IntervalT<Scalar>& b) {
    const Scalar lo = std::max(a.start, b.start);
    const Scalar hi = std::min(a.end, b.end);
    return hi > lo ? hi - lo : Scalar(0);
}

/// Smallest interval containing both arguments.
template <typename Scalar>
inline IntervalT<Scalar> enclosure(const IntervalT<Scalar>& a, const IntervalT<Scalar>& b) {
    return {std::min(a.start, b.start), std::max(a.end, b.end)};
}

/// Temporal IoU. Zero when the union is empty.
template <typename Scalar>
inline Scalar tiou(const IntervalT<Scalar>& a, const IntervalT<Scalar>& b) {
    const Scalar inter = intersection_length(a, b);
    const Scalar uni = a.length() + b.length() - inter;
    if (!(uni > Scalar(0))) return Scalar(0);
    return inter / uni;
}

/// One-dimensional generalized IoU: tiou minus the fraction of the enclosure
/// not covered by the union.
template <typename Scalar>
inline Scalar giou_1d(const IntervalT<Scalar>& a, const IntervalT<Scalar>& b) {
    const Scalar inter = intersection_length(a, b);
    const Scalar uni = a.length() + b.length() - inter;
    const Scalar hull = enclosure(a, b).length();
    if (!(hull > Scalar(0))) return Scalar(0);
    const Scalar iou = uni > Scalar(0) ? inter / uni : Scalar(0);
    return iou - (hull - uni) / hull;
}

struct PyramidConfig {
    int num_levels = 6;
    int base_length = 2304;
    int scale_factor = 2;
    double frame_rate = 1.0;  // feature frames per second

    void validate() const {
        if (num_levels < 1) throw std::invalid_argument("pyramid: num_levels must be positive");
        if (base_length < 1) throw std::invalid_argument("pyramid: base_length must be positive");
        if (scale_factor < 1) throw std::invalid_argument("pyramid: scale_factor must be positive");
        if (!(frame_rate > 0.0)) throw std::invalid_argument("pyramid: frame_rate must be positive");
    }

    std::int64_t stride(int level) const {
        std::int64_t s = 1;
        for (int i = 0; i < level; ++i) s *= scale_factor;
        return s;
    }

    int level_length(int level) const {
        const std::int64_t s = stride(level);
        return static_cast<int>((base_length + s - 1) / s);
    }

    std::size_t total_locations() const {
        std::size_t n = 0;
        for (int l = 0; l < num_levels; ++l) n += static_cast<std::size_t>(level_length(l));
        return n;
    }
};

/// A prediction site: index on one pyramid level, placed start-aligned on the
/// level-0 grid at t = index * stride.
struct PyramidLocation {
    int level = 0;
    int index = 0;
    double t = 0.0;
    double stride = 1.0;

    bool operator==(const PyramidLocation&) const = default;
};

inline PyramidLocation make_location(const PyramidConfig& cfg, int level, int index) {
    const auto s = static_cast<double>(cfg.stride(level));
    return {level, index, static_cast<double>(index) * s, s};
}

/// All locations, level-major then index-major.
inline std::vector<PyramidLocation> pyramid_locations(const PyramidConfig& cfg) {
    cfg.validate();
    std::vector<PyramidLocation> out;
    out.reserve(cfg.total_locations());
    for (int l = 0; l < cfg.num_levels; ++l) {
        const int n = cfg.level_length(l);
        for (int i = 0; i < n; ++i) out.push_back(make_location(cfg, l, i));
    }
    return out;
}

}  // namespace bcdet
