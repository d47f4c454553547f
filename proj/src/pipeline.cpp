#include "bcdet/pipeline.hpp"

#include <stdexcept>

namespace bcdet {

LoadedData load_data(const std::filesystem::path& dir, const PipelineConfig& cfg) {
    LoadedData data;
    data.annotations = read_annotations(annotation_path(dir));
    for (const auto& ann : data.annotations.videos) {
        LoadedVideo v;
        v.annotation = ann;
        v.features = read_pyramid(feature_path(dir, ann.id), cfg.scale_factor);
        if (v.features.levels.empty()) throw FormatError(feature_path(dir, ann.id).string(), -1, "pyramid has no levels");
        v.locations = v.features.locations();
        data.videos.push_back(std::move(v));
    }
    return data;
}

std::vector<TrainingSample> make_training_samples(const LoadedData& data, const PipelineConfig& cfg) {
    std::vector<TrainingSample> out;
    out.reserve(data.videos.size());
    for (const auto& v : data.videos) {
        TrainingSample s;
        s.features = v.features;
        s.locations = v.locations;
        const auto segments = segments_in_frames(v.annotation);
        s.targets = assign_targets(s.locations, segments, data.annotations.labels, cfg.alpha);
        out.push_back(std::move(s));
    }
    return out;
}

HeadConfig head_config_for(const LoadedData& data, const PipelineConfig& cfg) {
    if (data.videos.empty()) throw std::invalid_argument("dataset has no videos");
    HeadConfig h = cfg.heads;
    h.input_dim = data.videos.front().features.dim();
    h.labels = data.annotations.labels;
    h.validate();
    return h;
}

TrainResult train_model(const LoadedData& data, const PipelineConfig& cfg, const StepCallback& on_step) {
    const std::vector<TrainingSample> samples = make_training_samples(data, cfg);
    HeadWeights<double> w = init_head_weights<double>(head_config_for(data, cfg), cfg.init_seed);
    return train_loop(std::move(w), samples, cfg.loss, cfg.train, on_step);
}

DetectionMap infer(const HeadWeights<double>& weights, const LoadedData& data, const DecodeConfig& decode) {
    DetectionMap out;
    for (const auto& v : data.videos) {
        const HeadOutputs<double> heads = forward_heads(v.features, weights);
        out[v.annotation.id] = decode_sequence(heads, v.locations, weights.config.labels, v.length_frames(),
                                               v.annotation.frame_rate, decode);
    }
    return out;
}

std::vector<Detection> flatten(const DetectionMap& detections) {
    std::vector<Detection> out;
    for (const auto& [video, props] : detections)
        for (const auto& p : props) out.push_back({video, p.interval, p.label, p.score});
    return out;
}

EvalReport evaluate(std::span<const Detection> detections, const AnnotationSet& annotations,
                    std::span<const double> thresholds, std::span<const double> error_budgets, bool curves,
                    bool length_groups) {
    const std::vector<GroundTruth> gts = ground_truths(annotations);
    EvalReport report = map_at_thresholds(detections, gts, thresholds);
    if (curves) report.curves = boundary_error_curve(detections, gts, error_budgets);
    if (length_groups) {
        const auto groups = default_length_groups();
        report.length_groups = length_stratified_map(detections, gts, groups, thresholds);
    }
    return report;
}

}  // namespace bcdet
