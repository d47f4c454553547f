#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bcdet/assign.hpp"
#include "bcdet/heads.hpp"
#include "bcdet/label.hpp"

namespace bcdet {

struct SynthConfig {
    std::uint64_t seed = 0;
    /// Seeds the class templates and bump vectors; splits of one synthetic
    /// world share it and differ in `seed`.
    std::uint64_t template_seed = 0;
    int num_sequences = 20;
    int sequence_length = 512;  // level-0 feature frames
    LabelSpace labels{{4}};
    double density = 4.0;       // expected actions per sequence (Poisson)
    bool fixed_count = false;   // use round(density) actions instead of a Poisson draw
    double min_length = 8.0;    // frames, log-uniform
    double max_length = 96.0;
    double overlap_probability = 0.0;
    int feature_dim = 16;
    double noise = 0.1;
    double bump_width = 2.0;      // frames; Gaussian scale of boundary bumps
    double bump_amplitude = 1.0;
    double frame_rate = 8.0;  // feature frames per second
    int num_levels = 6;
    int scale_factor = 2;

    /// Throws std::invalid_argument with a diagnosis for infeasible settings.
    void validate() const;
};

struct SynthSequence {
    std::string id;
    int length = 0;  // frames
    std::vector<GroundTruthSegment> segments;  // frames
    FeaturePyramid<double> features;
};

struct SynthDataset {
    LabelSpace labels;
    double frame_rate = 1.0;
    std::vector<SynthSequence> sequences;
};

/// Class templates (one column per class, verbs then nouns for compound
/// labels) and the start/end bump vectors, all unit norm.
struct SynthTemplates {
    Eigen::MatrixXd classes;
    Eigen::VectorXd start_bump;
    Eigen::VectorXd end_bump;

    Eigen::VectorXd for_label(const LabelSpace& labels, const ActionLabel& label) const;
};

SynthTemplates make_templates(const SynthConfig& cfg);

/// Averages non-overlapping groups of `factor` columns; a short tail group
/// averages what it has.
Eigen::MatrixXd downsample_mean(const Eigen::MatrixXd& level, int factor);

SynthSequence generate_sequence(const SynthConfig& cfg, const SynthTemplates& templates, int index);

/// Deterministic in cfg: every sequence draws from its own derived stream.
SynthDataset generate_dataset(const SynthConfig& cfg);

}  // namespace bcdet
