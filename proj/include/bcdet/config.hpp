#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bcdet/decode.hpp"
#include "bcdet/heads.hpp"
#include "bcdet/losses.hpp"
#include "bcdet/synth.hpp"
#include "bcdet/train.hpp"

namespace bcdet {

/// Every tunable of the pipeline in one place. Defaults: alpha 3, beta 0.5,
/// gamma = omega = 0.5, sigma 5.5, six levels with scale factor 2, top-10
/// verbs by top-30 nouns, tIoU 0.1..0.5.
struct PipelineConfig {
    int num_levels = 6;
    int scale_factor = 2;
    int alpha = 3;
    HeadConfig heads;  // input_dim and labels come from the data
    LossHyper loss;
    TrainOptions train;
    DecodeConfig decode;
    std::vector<double> thresholds{0.1, 0.2, 0.3, 0.4, 0.5};
    std::vector<double> error_budgets{0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0};
    SynthConfig synth;
    std::uint64_t init_seed = 0;
};

/// Overlays the keys present in `j` onto `cfg`; unknown keys are errors.
void apply_config(PipelineConfig& cfg, const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& cfg);

/// Defaults overlaid with the file, if a path is given.
PipelineConfig load_config(const std::filesystem::path& path);

nlohmann::json head_config_to_json(const HeadConfig& h);
HeadConfig head_config_from_json(const nlohmann::json& j);

nlohmann::json label_space_to_json(const LabelSpace& labels);
LabelSpace label_space_from_json(const nlohmann::json& j);

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);
std::string_view to_string(ConfidenceMode m);
ConfidenceMode parse_confidence_mode(std::string_view name);

/// Parses "0.1,0.2,0.3" style lists.
std::vector<double> parse_number_list(const std::string& text);

}  // namespace bcdet
