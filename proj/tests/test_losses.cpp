#include <limits>
#include <doctest.h>

#include <random>

#include "bcdet/gradient_suite.hpp"
#include "bcdet/train.hpp"

using namespace bcdet;

namespace {

TrainingSample make_sample(const HeadConfig& cfg, int length, std::vector<GroundTruthSegment> segs, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    TrainingSample s;
    Eigen::MatrixXd x(cfg.input_dim, length);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(gen);
    s.features.levels.push_back(x);
    s.locations = s.features.locations();
    s.targets = assign_targets(s.locations, segs, cfg.labels, 3);
    return s;
}

HeadConfig tiny(int classes = 2) {
    HeadConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden = 4;
    cfg.labels = LabelSpace{{classes}};
    return cfg;
}

}  // namespace

TEST_CASE("focal loss examples") {
    const auto [loss, grad] = focal_term(0.0, 1.0, 0.25, 2.0);
    CHECK(loss == doctest::Approx(0.043322).epsilon(1e-5));
    CHECK(loss == doctest::Approx(-0.25 * 0.25 * std::log(0.5)).epsilon(1e-14));
    CHECK(focal_term(40.0, 1.0, 0.25, 2.0).first < 1e-30);

    Eigen::MatrixXd logits(1, 1), targets(1, 1);
    logits << 0.0;
    targets << 1.0;
    const std::vector<std::uint8_t> pos{1};
    CHECK(focal_loss(logits, targets, pos) == doctest::Approx(0.043322).epsilon(1e-5));
    const std::vector<std::uint8_t> none{0};
    CHECK(focal_loss(logits, targets, none, none) == 0.0);

    // derivative against a central difference
    for (double z : {-3.0, -0.4, 0.0, 1.1, 4.0})
        for (double t : {0.0, 1.0}) {
            const double h = 1e-6;
            const double fd = (focal_term(z + h, t, 0.25, 2.0).first - focal_term(z - h, t, 0.25, 2.0).first) / (2 * h);
            CHECK(focal_term(z, t, 0.25, 2.0).second == doctest::Approx(fd).epsilon(1e-7));
        }
}

TEST_CASE("giou and confidence loss examples") {
    const std::vector<Interval> pred{{0, 2}}, gt{{4, 6}};
    const std::vector<std::uint8_t> pos{1};
    CHECK(giou_regression_loss(pred, gt, pos) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    CHECK(giou_regression_loss(gt, gt, pos) == 0.0);
    const std::vector<std::uint8_t> neg{0};
    CHECK(giou_regression_loss(pred, gt, neg) == 0.0);

    Eigen::VectorXd p(3), q(3);
    p << 0.1, 0.5, 0.9;
    q << 0.0, 0.2, 0.4;
    const std::vector<std::uint8_t> mask{1, 1, 0};
    CHECK(confidence_loss(p, q, mask) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(confidence_loss(p, p, mask) == 0.0);
    CHECK(confidence_loss(p, q, std::vector<std::uint8_t>{0, 0, 0}) == 0.0);
    // permutation of masked locations
    Eigen::VectorXd p2(3), q2(3);
    p2 << 0.5, 0.1, 0.9;
    q2 << 0.2, 0.0, 0.4;
    CHECK(confidence_loss(p2, q2, mask) == confidence_loss(p, q, mask));
}

TEST_CASE("total loss combination") {
    const LossBreakdown b = total_loss(1.0, 0.4, 0.2, 0.2, 0.5, 0.5);
    CHECK(b.total == doctest::Approx(1.4).epsilon(1e-14));
    CHECK(total_loss(0, 0, 0, 0, 0.5, 0.5).total == 0.0);
    CHECK(total_loss(1.0, 0.4, 0.7, 0.9, 0.5, 0.0).total == total_loss(1.0, 0.4, 0, 0, 0.5, 0.5).total);
    CHECK_THROWS(total_loss(1, 1, 1, 1, -0.5, 0.5));

    std::mt19937_64 gen(2);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    for (int i = 0; i < 100; ++i) {
        const double c = u(gen), g = u(gen), s = u(gen), e = u(gen), gm = u(gen), om = u(gen);
        CHECK(total_loss(c, g, s, e, gm, om).total == c + gm * g + om * (s + e));
    }
}

TEST_CASE("giou gradient matches finite differences off kinks") {
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> u(0.0, 20.0), l(0.5, 10.0);
    int checked = 0;
    for (int i = 0; i < 500; ++i) {
        const double a = u(gen), b = u(gen);
        const Interval p{a, a + l(gen)}, g{b, b + l(gen)};
        const double h = 1e-6;
        const auto near = [&](double x, double y) { return std::abs(x - y) < 1e-3; };
        if (near(p.start, g.start) || near(p.end, g.end) || near(p.start, g.end) || near(p.end, g.start)) continue;
        const auto [ds, de] = giou_1d_gradient(p, g);
        const double fs = (giou_1d(Interval{p.start + h, p.end}, g) - giou_1d(Interval{p.start - h, p.end}, g)) / (2 * h);
        const double fe = (giou_1d(Interval{p.start, p.end + h}, g) - giou_1d(Interval{p.start, p.end - h}, g)) / (2 * h);
        CHECK(ds == doctest::Approx(fs).epsilon(1e-6));
        CHECK(de == doctest::Approx(fe).epsilon(1e-6));
        ++checked;
    }
    CHECK(checked > 400);
}

TEST_CASE("omitted locations do not enter the classification loss") {
    const HeadConfig cfg = tiny(1);
    const auto w = init_head_weights<double>(cfg, 1);
    TrainingSample s = make_sample(cfg, 24, {GroundTruthSegment::single({4, 18}, 0)}, 3);
    REQUIRE(std::count(s.targets.omitted.begin(), s.targets.omitted.end(), 1) > 0);
    const auto out = forward_heads(s.features, w);
    const LossEvaluation e = evaluate_loss(out, s.locations, s.targets, cfg.labels, LossHyper{});

    std::vector<std::uint8_t> included(s.targets.size());
    for (std::size_t i = 0; i < included.size(); ++i) included[i] = s.targets.omitted[i] ? 0 : 1;
    CHECK(e.parts.l_cls ==
          doctest::Approx(focal_loss(out.logits, s.targets.class_targets, s.targets.is_positive, included)).epsilon(1e-14));
}

TEST_CASE("zero-loss configuration has zero gradients") {
    HeadConfig cfg = tiny(2);
    HeadWeights<double> w(cfg);
    w.params.cls_top.bias.setConstant(-1000.0);
    const TrainingSample s = make_sample(cfg, 16, {}, 1);
    const TrainingSample* batch[] = {&s};
    w.zero_grad();
    const LossEvaluation e = batch_loss(w, std::span<const TrainingSample* const>(batch), LossHyper{}, true);
    CHECK(e.parts.total == 0.0);
    CHECK(w.grads.flatten().isZero(0.0));
}

TEST_CASE("duplicated batch leaves normalized gradients unchanged") {
    const HeadConfig cfg = tiny(2);
    const auto base = init_head_weights<double>(cfg, 5);
    const TrainingSample s =
        make_sample(cfg, 20, {GroundTruthSegment::single({3, 9}, 0), GroundTruthSegment::single({11, 18}, 1)}, 7);
    const TrainingSample* one[] = {&s};
    const TrainingSample* two[] = {&s, &s};

    HeadWeights<double> a = base, b = base;
    a.zero_grad();
    b.zero_grad();
    const auto la = batch_loss(a, std::span<const TrainingSample* const>(one), LossHyper{}, true);
    const auto lb = batch_loss(b, std::span<const TrainingSample* const>(two), LossHyper{}, true);
    CHECK(lb.parts.num_positive == 2 * la.parts.num_positive);
    CHECK(lb.parts.total == doctest::Approx(la.parts.total).epsilon(1e-12));
    CHECK((a.grads.flatten() - b.grads.flatten()).cwiseAbs().maxCoeff() <= 1e-12 * (1 + a.grads.flatten().cwiseAbs().maxCoeff()));
}

TEST_CASE("finite differences are exact on a quadratic in the last layer") {
    HeadConfig cfg = tiny(3);
    cfg.activation = Activation::identity;
    HeadWeights<double> w = init_head_weights<double>(cfg, 8);
    const TrainingSample s = make_sample(cfg, 10, {}, 9);

    const auto loss_of = [&](HeadWeights<double>& ww) {
        return 0.5 * forward_heads(s.features, ww).logits.squaredNorm();
    };
    ForwardCache<double> cache;
    w.zero_grad();
    const auto out = forward_heads(s.features, w, &cache);
    OutputGradients<double> d = OutputGradients<double>::zeros(out);
    d.logits = out.logits;
    backward_heads(w, cache, out, d);
    const Eigen::VectorXd analytic = w.grads.flatten();

    // indices of cls_top's weight and bias inside the flat vector
    std::vector<Eigen::Index> idx;
    Eigen::Index base = 0;
    w.params.for_each([&](std::string_view name, const MatrixX<double>& m) {
        if (name.starts_with("cls_top"))
            for (Eigen::Index i = 0; i < m.size(); ++i) idx.push_back(base + i);
        base += m.size();
    });
    REQUIRE(!idx.empty());
    Eigen::VectorXd theta = w.params.flatten();
    HeadWeights<double> probe = w;
    const auto f = [&](const Eigen::VectorXd& p) {
        probe.params.unflatten(p);
        return loss_of(probe);
    };
    CHECK(finite_difference_check(f, theta, analytic, idx, 1e-3) < 1e-7);
    CHECK_THROWS_AS(finite_difference_check(f, theta, analytic, idx, 0.0), std::invalid_argument);
}

TEST_CASE("analytic gradients match central differences") {
    HeadConfig cfg = tiny(2);
    HeadWeights<double> w = init_head_weights<double>(cfg, 21);
    w.params.offset_top.bias.setConstant(3.0);
    const TrainingSample s =
        make_sample(cfg, 16, {GroundTruthSegment::single({2, 9}, 0), GroundTruthSegment::single({8, 15}, 1)}, 4);
    const TrainingSample* batch[] = {&s};
    GradientCheckOptions opts;
    opts.samples_per_tensor = 0;
    CHECK(gradient_check(w, std::span<const TrainingSample* const>(batch), LossHyper{}, opts) < 1e-4);
    opts.eps = 0.0;
    CHECK_THROWS_AS(gradient_check(w, std::span<const TrainingSample* const>(batch), LossHyper{}, opts),
                    std::invalid_argument);

    const GradientSuiteResult r = run_gradient_suite(500, 20, LossHyper{});
    CHECK(r.instances == 20);
    CHECK(r.instances_with_conf > 10);
    CHECK(r.worst < 1e-4);
}

TEST_CASE("training loop contracts") {
    const HeadConfig cfg = tiny(2);
    const auto w0 = init_head_weights<double>(cfg, 2);
    std::vector<TrainingSample> data;
    data.push_back(make_sample(cfg, 24, {GroundTruthSegment::single({3, 10}, 0)}, 1));

    TrainOptions frozen;
    frozen.steps = 5;
    frozen.learning_rate = 0.0;
    const TrainResult still = train_loop(w0, data, LossHyper{}, frozen);
    CHECK(still.weights.params.flatten() == w0.params.flatten());
    REQUIRE(still.trace.size() == 5);
    for (const auto& t : still.trace) CHECK(t.total == still.trace.front().total);

    data.push_back(make_sample(cfg, 24, {GroundTruthSegment::single({12, 20}, 1)}, 2));
    data.push_back(make_sample(cfg, 24, {GroundTruthSegment::single({5, 16}, 0)}, 3));
    TrainOptions opts;
    opts.steps = 30;
    opts.batch_size = 2;
    opts.seed = 9;
    const TrainResult a = train_loop(w0, data, LossHyper{}, opts);
    const TrainResult b = train_loop(w0, data, LossHyper{}, opts);
    CHECK(a.weights.params.flatten() == b.weights.params.flatten());
    for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].total == b.trace[i].total);
    CHECK(a.trace.back().total < a.trace.front().total);

    auto poisoned = w0;
    poisoned.params.cls_top.bias(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(train_loop(poisoned, data, LossHyper{}, opts), TrainingDiverged);
}

TEST_CASE("epoch permutation") {
    const auto o = epoch_order(10, 3, 0);
    std::vector<std::size_t> sorted = o;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 10; ++i) CHECK(sorted[i] == i);
    CHECK(epoch_order(10, 3, 0) == o);
    CHECK(epoch_order(10, 3, 1) != o);
}
