#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "bcdet/label.hpp"
#include "bcdet/rng.hpp"
#include "bcdet/timeline.hpp"

namespace bcdet {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline constexpr int kKernelWidth = 3;

enum class Activation { silu, relu, identity };

/// How confidence tokens become confidences: Gaussian scaling of the token,
/// or a logistic squash of the token used directly (ablation).
enum class ConfidenceMode { scaled, direct };

struct HeadConfig {
    int input_dim = 0;
    int hidden = 64;
    LabelSpace labels;
    double sigma = 5.5;
    ConfidenceMode confidence = ConfidenceMode::scaled;
    Activation activation = Activation::silu;
    double cls_prior_bias = -2.0;

    void validate() const {
        if (input_dim < 1) throw std::invalid_argument("heads: input_dim must be positive");
        if (hidden < 1) throw std::invalid_argument("heads: hidden width must be positive");
        if (!(sigma > 0.0)) throw std::invalid_argument("heads: sigma must be positive");
        labels.validate();
    }
};

/// exp(-token^2 / (2 sigma^2)).
template <typename Scalar>
inline Scalar confidence_scale(Scalar token, Scalar sigma) {
    if (!(sigma > Scalar(0))) throw std::invalid_argument("confidence_scale: sigma must be positive");
    return std::exp(-(token * token) / (Scalar(2) * sigma * sigma));
}

/// [t - r_s, t + r_e], clamped to [0, sequence_length].
template <typename Scalar>
inline IntervalT<Scalar> decode_boundaries(Scalar t, Scalar r_s, Scalar r_e, Scalar sequence_length) {
    const Scalar start = std::clamp(t - r_s, Scalar(0), sequence_length);
    const Scalar end = std::clamp(t + r_e, Scalar(0), sequence_length);
    return {start, std::max(start, end)};
}

/// Multi-level features, one (channels x length) matrix per level; level l
/// has stride scale_factor^l on the level-0 grid.
template <typename Scalar>
struct FeaturePyramid {
    std::vector<MatrixX<Scalar>> levels;
    int scale_factor = 2;

    int num_levels() const { return static_cast<int>(levels.size()); }
    int dim() const { return levels.empty() ? 0 : static_cast<int>(levels.front().rows()); }

    double stride(int level) const {
        double s = 1.0;
        for (int i = 0; i < level; ++i) s *= scale_factor;
        return s;
    }

    Eigen::Index total_locations() const {
        Eigen::Index n = 0;
        for (const auto& l : levels) n += l.cols();
        return n;
    }

    std::vector<PyramidLocation> locations() const {
        std::vector<PyramidLocation> out;
        out.reserve(static_cast<std::size_t>(total_locations()));
        for (int l = 0; l < num_levels(); ++l) {
            const double s = stride(l);
            for (Eigen::Index i = 0; i < levels[static_cast<std::size_t>(l)].cols(); ++i)
                out.push_back({l, static_cast<int>(i), static_cast<double>(i) * s, s});
        }
        return out;
    }

    template <typename To>
    FeaturePyramid<To> cast() const {
        FeaturePyramid<To> out;
        out.scale_factor = scale_factor;
        for (const auto& l : levels) out.levels.push_back(l.template cast<To>());
        return out;
    }
};

/// Kernel-3 temporal convolution; weight columns hold the taps
/// [x(t-1) | x(t) | x(t+1)], each block `in` wide.
template <typename Scalar>
struct Conv1d {
    MatrixX<Scalar> weight;
    MatrixX<Scalar> bias;  // out x 1

    Eigen::Index in_channels() const { return weight.cols() / kKernelWidth; }
    Eigen::Index out_channels() const { return weight.rows(); }
};

/// Stack shifted copies of x so a kernel-3 convolution with zero padding is
/// a single matrix product.
template <typename Derived>
MatrixX<typename Derived::Scalar> im2col(const Eigen::MatrixBase<Derived>& x) {
    using Scalar = typename Derived::Scalar;
    const Eigen::Index c = x.rows();
    const Eigen::Index n = x.cols();
    MatrixX<Scalar> col = MatrixX<Scalar>::Zero(kKernelWidth * c, n);
    if (n == 0) return col;
    if (n > 1) col.block(0, 1, c, n - 1) = x.leftCols(n - 1);
    col.block(c, 0, c, n) = x;
    if (n > 1) col.block(2 * c, 0, c, n - 1) = x.rightCols(n - 1);
    return col;
}

template <typename Scalar>
MatrixX<Scalar> col2im(const MatrixX<Scalar>& col, Eigen::Index channels) {
    const Eigen::Index n = col.cols();
    MatrixX<Scalar> x = col.block(channels, 0, channels, n);
    if (n > 1) {
        x.leftCols(n - 1) += col.block(0, 1, channels, n - 1);
        x.rightCols(n - 1) += col.block(2 * channels, 0, channels, n - 1);
    }
    return x;
}

template <typename Scalar>
MatrixX<Scalar> conv_forward(const Conv1d<Scalar>& conv, const MatrixX<Scalar>& col) {
    MatrixX<Scalar> y = conv.weight * col;
    y.colwise() += conv.bias.col(0);
    return y;
}

template <typename Scalar>
Scalar activate(Activation a, Scalar z) {
    switch (a) {
        case Activation::silu: return z / (Scalar(1) + std::exp(-z));
        case Activation::relu: return z > Scalar(0) ? z : Scalar(0);
        case Activation::identity: break;
    }
    return z;
}

template <typename Scalar>
Scalar activate_derivative(Activation a, Scalar z) {
    switch (a) {
        case Activation::silu: {
            const Scalar s = Scalar(1) / (Scalar(1) + std::exp(-z));
            return s * (Scalar(1) + z * (Scalar(1) - s));
        }
        case Activation::relu: return z > Scalar(0) ? Scalar(1) : Scalar(0);
        case Activation::identity: break;
    }
    return Scalar(1);
}

/// Parameters of the boundary and classification heads. The two boundary
/// branches share a two-layer trunk and differ only in their top layers.
template <typename Scalar>
struct HeadParams {
    Conv1d<Scalar> boundary1, boundary2;
    Conv1d<Scalar> offset_top;      // 2 channels: start, end distance
    Conv1d<Scalar> confidence_top;  // 2 channels: start, end token
    Conv1d<Scalar> cls1, cls2;
    Conv1d<Scalar> cls_top;  // one logit per class, tasks stacked

    /// Visits every tensor with a stable name, in serialization order.
    template <typename F>
    void for_each(F&& f) {
        visit_impl(*this, f);
    }
    template <typename F>
    void for_each(F&& f) const {
        visit_impl(*this, f);
    }

    Eigen::Index size() const {
        Eigen::Index n = 0;
        for_each([&](std::string_view, const MatrixX<Scalar>& m) { n += m.size(); });
        return n;
    }

    VectorX<Scalar> flatten() const {
        VectorX<Scalar> out(size());
        Eigen::Index k = 0;
        for_each([&](std::string_view, const MatrixX<Scalar>& m) {
            out.segment(k, m.size()) = m.reshaped();
            k += m.size();
        });
        return out;
    }

    void unflatten(const VectorX<Scalar>& flat) {
        if (flat.size() != size()) throw std::invalid_argument("unflatten: size mismatch");
        Eigen::Index k = 0;
        for_each([&](std::string_view, MatrixX<Scalar>& m) {
            m.reshaped() = flat.segment(k, m.size());
            k += m.size();
        });
    }

    void set_zero() {
        for_each([](std::string_view, MatrixX<Scalar>& m) { m.setZero(); });
    }

private:
    template <typename Self, typename F>
    static void visit_impl(Self& self, F& f) {
        const auto conv = [&](const char* name, auto& c) {
            f(std::string(name) + ".weight", c.weight);
            f(std::string(name) + ".bias", c.bias);
        };
        conv("boundary1", self.boundary1);
        conv("boundary2", self.boundary2);
        conv("offset_top", self.offset_top);
        conv("confidence_top", self.confidence_top);
        conv("cls1", self.cls1);
        conv("cls2", self.cls2);
        conv("cls_top", self.cls_top);
    }
};

template <typename Scalar>
Conv1d<Scalar> make_conv(Eigen::Index in, Eigen::Index out) {
    return {MatrixX<Scalar>::Zero(out, kKernelWidth * in), MatrixX<Scalar>::Zero(out, 1)};
}

template <typename Scalar>
HeadParams<Scalar> make_params(const HeadConfig& cfg) {
    const Eigen::Index in = cfg.input_dim;
    const Eigen::Index h = cfg.hidden;
    HeadParams<Scalar> p;
    p.boundary1 = make_conv<Scalar>(in, h);
    p.boundary2 = make_conv<Scalar>(h, h);
    p.offset_top = make_conv<Scalar>(h, 2);
    p.confidence_top = make_conv<Scalar>(h, 2);
    p.cls1 = make_conv<Scalar>(in, h);
    p.cls2 = make_conv<Scalar>(h, h);
    p.cls_top = make_conv<Scalar>(h, cfg.labels.total_classes());
    return p;
}

/// Parameters plus gradient buffers of identical shape.
template <typename Scalar>
struct HeadWeights {
    HeadConfig config;
    HeadParams<Scalar> params;
    HeadParams<Scalar> grads;

    HeadWeights() = default;
    explicit HeadWeights(const HeadConfig& cfg)
        : config(cfg), params(make_params<Scalar>(cfg)), grads(make_params<Scalar>(cfg)) {
        cfg.validate();
    }

    void zero_grad() { grads.set_zero(); }

    template <typename To>
    HeadWeights<To> cast() const {
        HeadWeights<To> out(config);
        std::vector<const MatrixX<Scalar>*> src;
        params.for_each([&](std::string_view, const MatrixX<Scalar>& m) { src.push_back(&m); });
        std::size_t k = 0;
        out.params.for_each([&](std::string_view, MatrixX<To>& m) { m = src[k++]->template cast<To>(); });
        return out;
    }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, and the
/// classification prior on the top bias. Tensors are filled in visiting
/// order from one counter-based stream.
template <typename Scalar>
HeadWeights<Scalar> init_head_weights(const HeadConfig& cfg, std::uint64_t seed) {
    HeadWeights<Scalar> w(cfg);
    CounterRng rng = CounterRng::derive(seed, 0x4845414453ULL);
    w.params.for_each([&](std::string_view name, MatrixX<Scalar>& m) {
        if (name.ends_with(".bias")) return;
        const double k = 1.0 / std::sqrt(static_cast<double>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<Scalar>(rng.uniform(-k, k));
    });
    w.params.cls_top.bias.setConstant(static_cast<Scalar>(cfg.cls_prior_bias));
    return w;
}

/// Head outputs for all locations, concatenated level-major.
template <typename Scalar>
struct HeadOutputs {
    MatrixX<Scalar> offsets;      // 2 x N, level-0 units, >= 0
    MatrixX<Scalar> tokens;       // 2 x N
    MatrixX<Scalar> confidences;  // 2 x N, in (0, 1]
    MatrixX<Scalar> logits;       // C x N
    std::vector<Eigen::Index> level_begin;  // num_levels + 1 entries

    Eigen::Index size() const { return offsets.cols(); }
};

template <typename Scalar>
struct LevelCache {
    double stride = 1.0;
    MatrixX<Scalar> col_x;
    MatrixX<Scalar> z_b1, col_b1, z_b2, col_b2;
    MatrixX<Scalar> raw_offsets;
    MatrixX<Scalar> z_c1, col_c1, z_c2, col_c2;
};

template <typename Scalar>
struct ForwardCache {
    std::vector<LevelCache<Scalar>> levels;
    bool valid = false;
};

/// Forward pass shared across levels; fills `cache` for backward if given.
template <typename Scalar>
HeadOutputs<Scalar> forward_heads(const FeaturePyramid<Scalar>& features, const HeadWeights<Scalar>& w,
                                  ForwardCache<Scalar>* cache = nullptr) {
    const HeadConfig& cfg = w.config;
    const auto& p = w.params;
    const Eigen::Index n = features.total_locations();
    const Eigen::Index classes = cfg.labels.total_classes();

    HeadOutputs<Scalar> out;
    out.offsets.resize(2, n);
    out.tokens.resize(2, n);
    out.confidences.resize(2, n);
    out.logits.resize(classes, n);
    out.level_begin.assign(1, 0);
    if (cache) {
        cache->levels.clear();
        cache->valid = false;
    }

    const auto act = [&](const MatrixX<Scalar>& z) {
        return z.unaryExpr([a = cfg.activation](Scalar v) { return activate(a, v); }).eval();
    };

    Eigen::Index begin = 0;
    for (int l = 0; l < features.num_levels(); ++l) {
        const MatrixX<Scalar>& x = features.levels[static_cast<std::size_t>(l)];
        if (x.rows() != cfg.input_dim)
            throw std::invalid_argument("forward_heads: feature dimension " + std::to_string(x.rows()) +
                                        " does not match head input " + std::to_string(cfg.input_dim));
        const Eigen::Index len = x.cols();
        const double stride = features.stride(l);

        LevelCache<Scalar> lc;
        lc.stride = stride;
        lc.col_x = im2col(x);

        lc.z_b1 = conv_forward(p.boundary1, lc.col_x);
        lc.col_b1 = im2col(act(lc.z_b1));
        lc.z_b2 = conv_forward(p.boundary2, lc.col_b1);
        lc.col_b2 = im2col(act(lc.z_b2));
        lc.raw_offsets = conv_forward(p.offset_top, lc.col_b2);
        const MatrixX<Scalar> tokens = conv_forward(p.confidence_top, lc.col_b2);

        lc.z_c1 = conv_forward(p.cls1, lc.col_x);
        lc.col_c1 = im2col(act(lc.z_c1));
        lc.z_c2 = conv_forward(p.cls2, lc.col_c1);
        lc.col_c2 = im2col(act(lc.z_c2));

        out.offsets.middleCols(begin, len) = lc.raw_offsets.cwiseMax(Scalar(0)) * static_cast<Scalar>(stride);
        out.tokens.middleCols(begin, len) = tokens;
        out.logits.middleCols(begin, len) = conv_forward(p.cls_top, lc.col_c2);

        begin += len;
        out.level_begin.push_back(begin);
        if (cache) cache->levels.push_back(std::move(lc));
    }

    const auto sigma = static_cast<Scalar>(cfg.sigma);
    if (cfg.confidence == ConfidenceMode::scaled)
        out.confidences = out.tokens.unaryExpr([sigma](Scalar b) { return confidence_scale(b, sigma); });
    else
        out.confidences = out.tokens.unaryExpr([](Scalar b) { return Scalar(1) / (Scalar(1) + std::exp(-b)); });

    if (cache) cache->valid = true;
    return out;
}

/// Loss gradients with respect to the head outputs.
template <typename Scalar>
struct OutputGradients {
    MatrixX<Scalar> offsets;      // 2 x N
    MatrixX<Scalar> confidences;  // 2 x N
    MatrixX<Scalar> logits;       // C x N

    static OutputGradients zeros(const HeadOutputs<Scalar>& o) {
        return {MatrixX<Scalar>::Zero(2, o.size()), MatrixX<Scalar>::Zero(2, o.size()),
                MatrixX<Scalar>::Zero(o.logits.rows(), o.size())};
    }
};

namespace detail {

template <typename Scalar>
void conv_backward(const Conv1d<Scalar>& conv, Conv1d<Scalar>& grad, const MatrixX<Scalar>& col,
                   const MatrixX<Scalar>& dy, MatrixX<Scalar>* dcol) {
    grad.weight.noalias() += dy * col.transpose();
    grad.bias.col(0) += dy.rowwise().sum();
    if (dcol) dcol->noalias() = conv.weight.transpose() * dy;
}

template <typename Scalar>
MatrixX<Scalar> through_activation(Activation a, const MatrixX<Scalar>& dcol, const MatrixX<Scalar>& z) {
    const MatrixX<Scalar> da = col2im(dcol, z.rows());
    return da.cwiseProduct(z.unaryExpr([a](Scalar v) { return activate_derivative(a, v); }));
}

}  // namespace detail

/// Accumulates parameter gradients into w.grads from output gradients.
template <typename Scalar>
void backward_heads(HeadWeights<Scalar>& w, const ForwardCache<Scalar>& cache, const HeadOutputs<Scalar>& out,
                    const OutputGradients<Scalar>& d_out) {
    if (!cache.valid) throw std::logic_error("backward_heads: forward cache not initialized");
    const HeadConfig& cfg = w.config;
    const auto& p = w.params;
    auto& g = w.grads;
    const auto sigma2 = static_cast<Scalar>(cfg.sigma * cfg.sigma);

    for (std::size_t l = 0; l < cache.levels.size(); ++l) {
        const LevelCache<Scalar>& lc = cache.levels[l];
        const Eigen::Index begin = out.level_begin[l];
        const Eigen::Index len = out.level_begin[l + 1] - begin;
        const auto stride = static_cast<Scalar>(lc.stride);

        const MatrixX<Scalar> d_raw =
            (d_out.offsets.middleCols(begin, len) * stride)
                .cwiseProduct(lc.raw_offsets.unaryExpr([](Scalar v) { return v > Scalar(0) ? Scalar(1) : Scalar(0); }));

        const auto conf = out.confidences.middleCols(begin, len);
        const auto tokens = out.tokens.middleCols(begin, len);
        MatrixX<Scalar> d_tokens;
        if (cfg.confidence == ConfidenceMode::scaled)
            d_tokens = d_out.confidences.middleCols(begin, len).cwiseProduct(conf).cwiseProduct(-tokens / sigma2);
        else
            d_tokens = d_out.confidences.middleCols(begin, len).cwiseProduct(
                conf.cwiseProduct((MatrixX<Scalar>::Ones(2, len) - conf)));

        MatrixX<Scalar> dcol_top, dcol_conf;
        detail::conv_backward(p.offset_top, g.offset_top, lc.col_b2, d_raw, &dcol_top);
        detail::conv_backward(p.confidence_top, g.confidence_top, lc.col_b2, d_tokens, &dcol_conf);
        dcol_top += dcol_conf;
        const MatrixX<Scalar> dz_b2 = detail::through_activation(cfg.activation, dcol_top, lc.z_b2);
        MatrixX<Scalar> dcol_b1;
        detail::conv_backward(p.boundary2, g.boundary2, lc.col_b1, dz_b2, &dcol_b1);
        const MatrixX<Scalar> dz_b1 = detail::through_activation(cfg.activation, dcol_b1, lc.z_b1);
        detail::conv_backward<Scalar>(p.boundary1, g.boundary1, lc.col_x, dz_b1, nullptr);

        MatrixX<Scalar> dcol_c2;
        detail::conv_backward(p.cls_top, g.cls_top, lc.col_c2, MatrixX<Scalar>(d_out.logits.middleCols(begin, len)),
                              &dcol_c2);
        const MatrixX<Scalar> dz_c2 = detail::through_activation(cfg.activation, dcol_c2, lc.z_c2);
        MatrixX<Scalar> dcol_c1;
        detail::conv_backward(p.cls2, g.cls2, lc.col_c1, dz_c2, &dcol_c1);
        const MatrixX<Scalar> dz_c1 = detail::through_activation(cfg.activation, dcol_c1, lc.z_c1);
        detail::conv_backward<Scalar>(p.cls1, g.cls1, lc.col_x, dz_c1, nullptr);
    }
}

}  // namespace bcdet
