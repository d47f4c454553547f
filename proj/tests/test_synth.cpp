#include <doctest.h>

#include "bcdet/rng.hpp"
#include "bcdet/synth.hpp"

using namespace bcdet;

TEST_CASE("counter generator") {
    CounterRng a(12345), b(12345);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    // draw k is a pure function of (key, k)
    CounterRng c(12345);
    CHECK(c.next_u64() == CounterRng::mix(12345 + CounterRng::kGolden));
    CHECK(CounterRng::derive(1, 2).next_u64() != CounterRng::derive(1, 3).next_u64());

    CounterRng r(7);
    double sum = 0.0, sq = 0.0, pois = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const double z = r.normal();
        sum += z;
        sq += z * z;
        pois += r.poisson(3.5);
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
    CHECK(std::abs(pois / n - 3.5) < 0.1);
}

TEST_CASE("noiseless features inside a segment equal the class template") {
    SynthConfig cfg;
    cfg.noise = 0.0;
    cfg.fixed_count = true;
    cfg.density = 1.0;
    cfg.num_sequences = 5;
    cfg.sequence_length = 128;
    const SynthDataset ds = generate_dataset(cfg);
    const SynthTemplates t = make_templates(cfg);
    for (const auto& seq : ds.sequences) {
        REQUIRE(seq.segments.size() == 1);
        const auto& s = seq.segments[0];
        const Eigen::VectorXd want = t.for_label(cfg.labels, s.label());
        for (auto j = static_cast<Eigen::Index>(s.interval.start); j < static_cast<Eigen::Index>(s.interval.end); ++j)
            CHECK(seq.features.levels[0].col(j) == want);
    }
}

TEST_CASE("generation is deterministic") {
    SynthConfig cfg;
    cfg.num_sequences = 3;
    cfg.seed = 77;
    const SynthDataset a = generate_dataset(cfg);
    const SynthDataset b = generate_dataset(cfg);
    for (std::size_t i = 0; i < a.sequences.size(); ++i) {
        CHECK(a.sequences[i].id == b.sequences[i].id);
        REQUIRE(a.sequences[i].segments.size() == b.sequences[i].segments.size());
        for (std::size_t k = 0; k < a.sequences[i].segments.size(); ++k)
            CHECK(a.sequences[i].segments[k].interval == b.sequences[i].segments[k].interval);
        for (std::size_t l = 0; l < a.sequences[i].features.levels.size(); ++l)
            CHECK(a.sequences[i].features.levels[l] == b.sequences[i].features.levels[l]);
    }
    cfg.seed = 78;
    const SynthDataset c = generate_dataset(cfg);
    CHECK(c.sequences[0].features.levels[0] != a.sequences[0].features.levels[0]);
}

TEST_CASE("realized density") {
    SynthConfig cfg;
    cfg.num_sequences = 100;
    cfg.sequence_length = 2304;
    cfg.density = 128;
    cfg.min_length = 2;
    cfg.max_length = 6;
    cfg.num_levels = 1;
    cfg.feature_dim = 2;
    double total = 0.0;
    for (const auto& s : generate_dataset(cfg).sequences) total += static_cast<double>(s.segments.size());
    CHECK(std::abs(total / 100.0 - 128.0) <= 12.8);
}

TEST_CASE("segments are valid and disjoint without overlap") {
    SynthConfig cfg;
    cfg.num_sequences = 30;
    cfg.density = 8;
    cfg.feature_dim = 2;
    for (const auto& seq : generate_dataset(cfg).sequences)
        for (std::size_t i = 0; i < seq.segments.size(); ++i) {
            const Interval& a = seq.segments[i].interval;
            CHECK(a.length() > 0.0);
            CHECK(a.start >= 0.0);
            CHECK(a.end <= seq.length);
            for (std::size_t j = i + 1; j < seq.segments.size(); ++j)
                CHECK(intersection_length(a, seq.segments[j].interval) == 0.0);
        }
}

TEST_CASE("pyramid levels are pairwise means") {
    SynthConfig cfg;
    cfg.num_sequences = 2;
    cfg.sequence_length = 100;
    cfg.max_length = 40;
    cfg.num_levels = 4;
    for (const auto& seq : generate_dataset(cfg).sequences) {
        const auto& lv = seq.features.levels;
        REQUIRE(lv.size() == 4);
        CHECK(lv[1].cols() == 50);
        CHECK(lv[3].cols() == 13);
        for (std::size_t l = 1; l < lv.size(); ++l)
            for (Eigen::Index j = 0; j < lv[l].cols(); ++j) {
                const Eigen::Index b = 2 * j;
                const Eigen::VectorXd want =
                    b + 1 < lv[l - 1].cols() ? Eigen::VectorXd((lv[l - 1].col(b) + lv[l - 1].col(b + 1)) / 2.0)
                                             : Eigen::VectorXd(lv[l - 1].col(b));
                CHECK((lv[l].col(j) - want).cwiseAbs().maxCoeff() == 0.0);
            }
    }
}

TEST_CASE("nearest-template classification is perfect without noise") {
    SynthConfig cfg;
    cfg.noise = 0.0;
    cfg.num_sequences = 10;
    cfg.labels = LabelSpace{{6}};
    const SynthTemplates t = make_templates(cfg);
    for (const auto& seq : generate_dataset(cfg).sequences)
        for (const auto& s : seq.segments)
            for (auto j = static_cast<Eigen::Index>(s.interval.start); j < static_cast<Eigen::Index>(s.interval.end); ++j) {
                Eigen::Index best = 0;
                (t.classes.colwise() - seq.features.levels[0].col(j)).colwise().squaredNorm().minCoeff(&best);
                CHECK(best == s.label().primary);
            }
}

TEST_CASE("infeasible configurations are rejected with a diagnosis") {
    SynthConfig cfg;
    cfg.density = 40;
    cfg.min_length = 40;
    cfg.max_length = 96;
    try {
        generate_dataset(cfg);
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("infeasible") != std::string::npos);
    }
    SynthConfig big;
    big.max_length = 1000;
    CHECK_THROWS_AS(generate_dataset(big), std::invalid_argument);
    SynthConfig neg;
    neg.noise = -1;
    CHECK_THROWS_AS(generate_dataset(neg), std::invalid_argument);
}
