#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bcdet/assign.hpp"
#include "bcdet/decode.hpp"
#include "bcdet/eval.hpp"
#include "bcdet/heads.hpp"
#include "bcdet/losses.hpp"
#include "bcdet/synth.hpp"

namespace bcdet {

/// Malformed input; `offset` is the byte position of the problem when known.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& source, std::int64_t offset, const std::string& what);
    std::int64_t offset() const { return offset_; }

private:
    std::int64_t offset_;
};

/// Writes via a sibling temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

// --- feature pyramids: "FPY1", u32 levels, (u32 length, u32 dim) per level,
//     then per level length x dim little-endian float32, row-major.
std::string encode_pyramid(const FeaturePyramid<double>& pyramid);
FeaturePyramid<double> decode_pyramid(std::string_view bytes, int scale_factor, const std::string& source = "<memory>");
void write_pyramid(const std::filesystem::path& path, const FeaturePyramid<double>& pyramid);
FeaturePyramid<double> read_pyramid(const std::filesystem::path& path, int scale_factor);

// --- annotations
struct AnnotatedSegment {
    Interval interval;  // seconds
    ActionLabel label;
};

struct VideoAnnotation {
    std::string id;
    double duration_seconds = 0.0;
    double frame_rate = 1.0;
    std::vector<AnnotatedSegment> segments;
};

struct AnnotationSet {
    LabelSpace labels;
    std::vector<VideoAnnotation> videos;
};

inline constexpr std::string_view kAnnotationVersion = "bcdet.annotations.v1";
inline constexpr std::string_view kDetectionVersion = "bcdet.detections.v1";

nlohmann::json annotations_to_json(const AnnotationSet& set);
AnnotationSet annotations_from_json(const nlohmann::json& j, const std::string& source = "<memory>");
void write_annotations(const std::filesystem::path& path, const AnnotationSet& set);
AnnotationSet read_annotations(const std::filesystem::path& path);

/// Segments of one video in feature frames.
std::vector<GroundTruthSegment> segments_in_frames(const VideoAnnotation& video);
std::vector<GroundTruth> ground_truths(const AnnotationSet& set);
AnnotationSet annotations_of(const SynthDataset& ds);

/// Dataset directory: annotations.json plus features/<id>.fpy.
void write_dataset(const std::filesystem::path& dir, const SynthDataset& ds);
std::filesystem::path annotation_path(const std::filesystem::path& dir);
std::filesystem::path feature_path(const std::filesystem::path& dir, const std::string& video_id);

// --- detections
using DetectionMap = std::map<std::string, std::vector<Proposal>>;
nlohmann::json detections_to_json(const DetectionMap& detections);
std::vector<Detection> detections_from_json(const nlohmann::json& j, const std::string& source = "<memory>");
void write_detections(const std::filesystem::path& path, const DetectionMap& detections);
std::vector<Detection> read_detections(const std::filesystem::path& path);

// --- checkpoints: "BCKP", u32 version, u32 config length + JSON head
//     config, u32 tensor count, per tensor (u32 name length, name, u32 rows,
//     u32 cols), then every tensor column-major as little-endian float32.
std::string encode_checkpoint(const HeadWeights<double>& w);
HeadWeights<double> decode_checkpoint(std::string_view bytes, const std::string& source = "<memory>");
void write_checkpoint(const std::filesystem::path& path, const HeadWeights<double>& w);
HeadWeights<double> read_checkpoint(const std::filesystem::path& path);

// --- reports and tables
std::string format_number(double v);
std::string trace_csv(const std::vector<LossBreakdown>& trace);
nlohmann::json report_to_json(const EvalReport& report);
/// One row: name, one column per threshold, Avg.
std::string map_table_csv(const std::vector<std::pair<std::string, EvalReport>>& rows);
std::string per_class_csv(const EvalReport& report);
std::string curves_csv(const BoundaryErrorCurves& curves);
std::string length_groups_csv(const std::vector<GroupScore>& groups);
/// Standalone SVG of the start/end boundary-error curves.
std::string curves_svg(const BoundaryErrorCurves& curves, const std::string& provenance);

}  // namespace bcdet
