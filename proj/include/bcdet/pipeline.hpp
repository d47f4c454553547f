#pragma once

#include <filesystem>
#include <vector>

#include "bcdet/config.hpp"
#include "bcdet/io.hpp"
#include "bcdet/train.hpp"

namespace bcdet {

struct LoadedVideo {
    VideoAnnotation annotation;
    FeaturePyramid<double> features;
    std::vector<PyramidLocation> locations;

    double length_frames() const { return features.levels.empty() ? 0.0 : static_cast<double>(features.levels.front().cols()); }
};

struct LoadedData {
    AnnotationSet annotations;
    std::vector<LoadedVideo> videos;
};

/// Reads annotations.json and every referenced feature file.
LoadedData load_data(const std::filesystem::path& dir, const PipelineConfig& cfg);

std::vector<TrainingSample> make_training_samples(const LoadedData& data, const PipelineConfig& cfg);

HeadConfig head_config_for(const LoadedData& data, const PipelineConfig& cfg);

TrainResult train_model(const LoadedData& data, const PipelineConfig& cfg, const StepCallback& on_step = {});

DetectionMap infer(const HeadWeights<double>& weights, const LoadedData& data, const DecodeConfig& decode);

std::vector<Detection> flatten(const DetectionMap& detections);

EvalReport evaluate(std::span<const Detection> detections, const AnnotationSet& annotations,
                    std::span<const double> thresholds, std::span<const double> error_budgets, bool curves,
                    bool length_groups);

}  // namespace bcdet
