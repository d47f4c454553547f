#include "bcdet/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>

namespace bcdet {

using nlohmann::json;

namespace {

void check_keys(const json& j, const char* section, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw std::invalid_argument(std::string("config: '") + section + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw std::invalid_argument(std::string("config: unknown key '") + key + "' in '" + section + "'");
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::silu: return "silu";
        case Activation::relu: return "relu";
        case Activation::identity: return "identity";
    }
    return "silu";
}

Activation parse_activation(std::string_view name) {
    if (name == "silu") return Activation::silu;
    if (name == "relu") return Activation::relu;
    if (name == "identity") return Activation::identity;
    throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(ConfidenceMode m) { return m == ConfidenceMode::scaled ? "scaled" : "direct"; }

ConfidenceMode parse_confidence_mode(std::string_view name) {
    if (name == "scaled") return ConfidenceMode::scaled;
    if (name == "direct") return ConfidenceMode::direct;
    throw std::invalid_argument("unknown confidence mode '" + std::string(name) + "'");
}

json label_space_to_json(const LabelSpace& labels) {
    if (labels.compound()) return {{"task", "verb_noun"}, {"num_verbs", labels.class_counts[0]}, {"num_nouns", labels.class_counts[1]}};
    return {{"task", "single"}, {"num_classes", labels.class_counts.at(0)}};
}

LabelSpace label_space_from_json(const json& j) {
    const std::string task = j.value("task", "single");
    LabelSpace labels;
    if (task == "single")
        labels.class_counts = {j.at("num_classes").get<int>()};
    else if (task == "verb_noun")
        labels.class_counts = {j.at("num_verbs").get<int>(), j.at("num_nouns").get<int>()};
    else
        throw std::invalid_argument("unknown task '" + task + "'");
    labels.validate();
    return labels;
}

json head_config_to_json(const HeadConfig& h) {
    return {{"input_dim", h.input_dim},
            {"hidden", h.hidden},
            {"labels", label_space_to_json(h.labels)},
            {"sigma", h.sigma},
            {"confidence", std::string(to_string(h.confidence))},
            {"activation", std::string(to_string(h.activation))},
            {"cls_prior_bias", h.cls_prior_bias}};
}

HeadConfig head_config_from_json(const json& j) {
    HeadConfig h;
    read(j, "input_dim", h.input_dim);
    read(j, "hidden", h.hidden);
    if (j.contains("labels")) h.labels = label_space_from_json(j.at("labels"));
    read(j, "sigma", h.sigma);
    if (j.contains("confidence")) h.confidence = parse_confidence_mode(j.at("confidence").get<std::string>());
    if (j.contains("activation")) h.activation = parse_activation(j.at("activation").get<std::string>());
    read(j, "cls_prior_bias", h.cls_prior_bias);
    return h;
}

void apply_config(PipelineConfig& cfg, const json& j) {
    check_keys(j, "root", {"pyramid", "assign", "heads", "loss", "train", "decode", "eval", "synth"});
    if (j.contains("pyramid")) {
        const json& p = j.at("pyramid");
        check_keys(p, "pyramid", {"num_levels", "scale_factor"});
        read(p, "num_levels", cfg.num_levels);
        read(p, "scale_factor", cfg.scale_factor);
    }
    if (j.contains("assign")) {
        const json& a = j.at("assign");
        check_keys(a, "assign", {"alpha"});
        read(a, "alpha", cfg.alpha);
    }
    if (j.contains("heads")) {
        const json& h = j.at("heads");
        check_keys(h, "heads", {"hidden", "sigma", "confidence", "activation", "cls_prior_bias"});
        read(h, "hidden", cfg.heads.hidden);
        read(h, "sigma", cfg.heads.sigma);
        if (h.contains("confidence")) cfg.heads.confidence = parse_confidence_mode(h.at("confidence").get<std::string>());
        if (h.contains("activation")) cfg.heads.activation = parse_activation(h.at("activation").get<std::string>());
        read(h, "cls_prior_bias", cfg.heads.cls_prior_bias);
    }
    if (j.contains("loss")) {
        const json& l = j.at("loss");
        check_keys(l, "loss", {"beta", "gamma", "omega", "focal_alpha", "focal_gamma", "task_weights"});
        read(l, "beta", cfg.loss.beta);
        read(l, "gamma", cfg.loss.gamma);
        read(l, "omega", cfg.loss.omega);
        read(l, "focal_alpha", cfg.loss.focal_alpha);
        read(l, "focal_gamma", cfg.loss.focal_gamma);
        read(l, "task_weights", cfg.loss.task_weights);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        check_keys(t, "train", {"steps", "learning_rate", "momentum", "batch_size", "seed", "init_seed"});
        read(t, "steps", cfg.train.steps);
        read(t, "learning_rate", cfg.train.learning_rate);
        read(t, "momentum", cfg.train.momentum);
        read(t, "batch_size", cfg.train.batch_size);
        read(t, "seed", cfg.train.seed);
        read(t, "init_seed", cfg.init_seed);
    }
    if (j.contains("decode")) {
        const json& d = j.at("decode");
        check_keys(d, "decode",
                   {"fusion", "pre_threshold", "pre_top_k", "top_v", "top_n", "nms_sigma", "score_floor", "max_keep"});
        if (d.contains("fusion")) cfg.decode.fusion = parse_fusion_mode(d.at("fusion").get<std::string>());
        read(d, "pre_threshold", cfg.decode.pre_threshold);
        read(d, "pre_top_k", cfg.decode.pre_top_k);
        read(d, "top_v", cfg.decode.top_v);
        read(d, "top_n", cfg.decode.top_n);
        read(d, "nms_sigma", cfg.decode.nms.decay_sigma);
        read(d, "score_floor", cfg.decode.nms.score_floor);
        read(d, "max_keep", cfg.decode.nms.max_keep);
    }
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        check_keys(e, "eval", {"thresholds", "error_budgets"});
        read(e, "thresholds", cfg.thresholds);
        read(e, "error_budgets", cfg.error_budgets);
    }
    if (j.contains("synth")) {
        const json& s = j.at("synth");
        check_keys(s, "synth",
                   {"seed", "template_seed", "num_sequences", "sequence_length", "labels", "density", "fixed_count",
                    "min_length", "max_length", "overlap_probability", "feature_dim", "noise", "bump_width",
                    "bump_amplitude", "frame_rate"});
        SynthConfig& sc = cfg.synth;
        read(s, "seed", sc.seed);
        read(s, "template_seed", sc.template_seed);
        read(s, "num_sequences", sc.num_sequences);
        read(s, "sequence_length", sc.sequence_length);
        if (s.contains("labels")) sc.labels = label_space_from_json(s.at("labels"));
        read(s, "density", sc.density);
        read(s, "fixed_count", sc.fixed_count);
        read(s, "min_length", sc.min_length);
        read(s, "max_length", sc.max_length);
        read(s, "overlap_probability", sc.overlap_probability);
        read(s, "feature_dim", sc.feature_dim);
        read(s, "noise", sc.noise);
        read(s, "bump_width", sc.bump_width);
        read(s, "bump_amplitude", sc.bump_amplitude);
        read(s, "frame_rate", sc.frame_rate);
    }
    cfg.synth.num_levels = cfg.num_levels;
    cfg.synth.scale_factor = cfg.scale_factor;
}

json to_json(const PipelineConfig& cfg) {
    const SynthConfig& sc = cfg.synth;
    return {
        {"pyramid", {{"num_levels", cfg.num_levels}, {"scale_factor", cfg.scale_factor}}},
        {"assign", {{"alpha", cfg.alpha}}},
        {"heads",
         {{"hidden", cfg.heads.hidden},
          {"sigma", cfg.heads.sigma},
          {"confidence", std::string(to_string(cfg.heads.confidence))},
          {"activation", std::string(to_string(cfg.heads.activation))},
          {"cls_prior_bias", cfg.heads.cls_prior_bias}}},
        {"loss",
         {{"beta", cfg.loss.beta},
          {"gamma", cfg.loss.gamma},
          {"omega", cfg.loss.omega},
          {"focal_alpha", cfg.loss.focal_alpha},
          {"focal_gamma", cfg.loss.focal_gamma},
          {"task_weights", cfg.loss.task_weights}}},
        {"train",
         {{"steps", cfg.train.steps},
          {"learning_rate", cfg.train.learning_rate},
          {"momentum", cfg.train.momentum},
          {"batch_size", cfg.train.batch_size},
          {"seed", cfg.train.seed},
          {"init_seed", cfg.init_seed}}},
        {"decode",
         {{"fusion", std::string(to_string(cfg.decode.fusion))},
          {"pre_threshold", cfg.decode.pre_threshold},
          {"pre_top_k", cfg.decode.pre_top_k},
          {"top_v", cfg.decode.top_v},
          {"top_n", cfg.decode.top_n},
          {"nms_sigma", cfg.decode.nms.decay_sigma},
          {"score_floor", cfg.decode.nms.score_floor},
          {"max_keep", cfg.decode.nms.max_keep}}},
        {"eval", {{"thresholds", cfg.thresholds}, {"error_budgets", cfg.error_budgets}}},
        {"synth",
         {{"seed", sc.seed},
          {"template_seed", sc.template_seed},
          {"num_sequences", sc.num_sequences},
          {"sequence_length", sc.sequence_length},
          {"labels", label_space_to_json(sc.labels)},
          {"density", sc.density},
          {"fixed_count", sc.fixed_count},
          {"min_length", sc.min_length},
          {"max_length", sc.max_length},
          {"overlap_probability", sc.overlap_probability},
          {"feature_dim", sc.feature_dim},
          {"noise", sc.noise},
          {"bump_width", sc.bump_width},
          {"bump_amplitude", sc.bump_amplitude},
          {"frame_rate", sc.frame_rate}}},
    };
}

PipelineConfig load_config(const std::filesystem::path& path) {
    PipelineConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    apply_config(cfg, j);
    return cfg;
}

std::vector<double> parse_number_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        const double v = std::stod(item, &used);
        if (used != item.size()) throw std::invalid_argument("not a number: '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("empty number list");
    return out;
}

}  // namespace bcdet
